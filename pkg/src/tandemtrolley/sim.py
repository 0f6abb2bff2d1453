"""Deterministic closed-loop simulator.

Each tick runs the full pipeline: synthesize due measurements, update the
belief, read pedestrian positions, arbitrate behavior, solve the NMPC on the
belief, shape the first command, and apply it to ground truth with sampled
process noise. Three independent generator streams (process, measurement,
pedestrian detection) are derived from the scenario seed so that removing
pedestrians that never matter does not perturb the rest of the run.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .behavior import (
    BehaviorMode,
    BehaviorSelector,
    Roi,
    shape_command,
)
from .estimator import (
    BeliefState,
    FilterStats,
    Measurement,
    MeasurementSource,
    predict,
    update,
)
from .geometry import (
    AssemblyState,
    ControlInput,
    PolarPoint,
    Pose2,
    to_polar_frame,
    wrap_angle,
)
from .grid import OccupancyGrid
from .hybrid_astar import ReferencePath, SearchConfig, plan_path
from .kinematics import (
    TrolleyStack,
    UnicyclePairModel,
    bearing_offsets,
    desired_distance,
    relative_distance,
    step_pair,
)
from .metrics import densify_waypoints, distances_to_polyline
from .nmpc import MpcLimits, MpcProblem, MpcWeights, build_reference, first_command, solve


class Outcome(Enum):
    GOAL_REACHED = "GoalReached"
    TIMEOUT = "Timeout"
    INTEGRITY_VIOLATION = "IntegrityViolation"


class ScenarioError(ValueError):
    """Scenario is malformed or cannot be set up (e.g. no global path)."""


@dataclass
class Pedestrian:
    """Scripted point pedestrian: piecewise-linear knots, held outside the span."""

    id: str
    script: list[tuple[float, tuple[float, float]]]
    radius: float = 0.3

    def __post_init__(self):
        if not self.script:
            raise ValueError(f"pedestrian {self.id!r} needs at least one knot")
        times = [t for t, _ in self.script]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError(f"pedestrian {self.id!r} knot times must strictly increase")

    def position(self, t: float) -> np.ndarray:
        knots = self.script
        if t <= knots[0][0]:
            return np.asarray(knots[0][1], dtype=float)
        if t >= knots[-1][0]:
            return np.asarray(knots[-1][1], dtype=float)
        for (t0, p0), (t1, p1) in zip(knots, knots[1:]):
            if t0 <= t <= t1:
                a = (t - t0) / (t1 - t0)
                return (1 - a) * np.asarray(p0, dtype=float) + a * np.asarray(p1, dtype=float)
        return np.asarray(knots[-1][1], dtype=float)


@dataclass
class NoiseConfig:
    """Per-step process and per-source measurement noise levels (std devs).

    Process noise is actuation-proportional (odometry-style): the nominal
    levels apply at `process_ref_speed` and scale linearly with each robot's
    commanded speed, so a braked robot does not random-walk.
    """

    process_xy: float = 0.003
    process_theta: float = 0.002
    process_ref_speed: float = 0.5
    leader_xy: float = 0.02
    leader_theta: float = 0.01
    follower_xy: float = 0.02
    follower_theta: float = 0.01
    relative_xy: float = 0.025
    relative_theta: float = 0.015
    pedestrian_xy: float = 0.05

    def process_scales(self, u: "ControlInput") -> np.ndarray:
        """Per-state noise scale factors for one applied command."""
        ref = max(self.process_ref_speed, 1e-6)
        s_l = min(abs(u.v_leader) / ref, 2.0)
        s_f = min(abs(u.v_follower) / ref, 2.0)
        return np.array([s_l, s_l, s_l, s_f, s_f, s_f])

    def process_cov(self, u: "ControlInput | None" = None) -> np.ndarray:
        d = np.array([self.process_xy, self.process_xy, self.process_theta] * 2)
        if u is not None:
            d = d * self.process_scales(u)
        return np.diag(d**2)

    def measurement_cov(self, source: MeasurementSource) -> np.ndarray:
        xy, th = {
            MeasurementSource.LEADER_POSE: (self.leader_xy, self.leader_theta),
            MeasurementSource.FOLLOWER_POSE: (self.follower_xy, self.follower_theta),
            MeasurementSource.RELATIVE_POSE: (self.relative_xy, self.relative_theta),
        }[source]
        return np.diag([xy**2, xy**2, th**2])


@dataclass
class Rates:
    leader: float = 10.0
    follower: float = 10.0
    relative: float = 10.0

    def for_source(self, source: MeasurementSource) -> float:
        return {
            MeasurementSource.LEADER_POSE: self.leader,
            MeasurementSource.FOLLOWER_POSE: self.follower,
            MeasurementSource.RELATIVE_POSE: self.relative,
        }[source]


@dataclass
class MpcConfig:
    horizon: int = 20
    dt: float = 0.1
    lookahead: float = 0.7


@dataclass
class BehaviorConfig:
    rho_min: float = 0.3
    rho_max: float = 3.0
    stop_eps: float = 0.02
    decel_rate: float = 1.0
    limited_fraction: float = 0.5
    debounce_ticks: int = 2


@dataclass
class ReferenceSpec:
    kind: str = "planner"  # planner | two_arc | waypoints
    curvature: float = 0.4
    n_waypoints: int = 30
    target: tuple[float, float] = (4.5, 4.2)
    waypoints: list[Pose2] = field(default_factory=list)


@dataclass
class Scenario:
    grid: OccupancyGrid
    start: Pose2
    goal: Pose2
    name: str = "scenario"
    trolleys: TrolleyStack = field(default_factory=lambda: TrolleyStack(3))
    goal_tolerance: float = 0.3
    pedestrians: list[Pedestrian] = field(default_factory=list)
    limits: MpcLimits = field(default_factory=MpcLimits)
    weights: MpcWeights = field(default_factory=MpcWeights)
    search: SearchConfig = field(default_factory=SearchConfig)
    noise: NoiseConfig = field(default_factory=NoiseConfig)
    rates: Rates = field(default_factory=Rates)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    behavior: BehaviorConfig = field(default_factory=BehaviorConfig)
    reference: ReferenceSpec = field(default_factory=ReferenceSpec)
    seed: int = 0
    duration_cap: float = 60.0
    integrity_threshold: float = 0.15
    initial_belief_sigma: float = 0.01
    follower_lag_tau: float = 0.0


@dataclass
class TickRecord:
    t: float
    truth: AssemblyState
    est_mean: AssemblyState
    cov_trace: float
    command: ControlInput
    mode: str
    classification: str
    r_error: float
    phi_leader: float
    phi_follower: float
    tracking_error: float
    mpc_objective: float
    mpc_iterations: int
    mpc_solve_time: float


def synthesize_measurements(
    truth: AssemblyState,
    noise: NoiseConfig,
    rates: Rates,
    t: float,
    rng: np.random.Generator,
) -> list[Measurement]:
    """Emit every source whose period divides t (phase 0), in a fixed order."""
    out = []
    x = truth.as_array()
    for source in MeasurementSource:  # declaration order keeps draws reproducible
        rate = rates.for_source(source)
        if rate < 0:
            raise ValueError("rates must be nonnegative")
        if rate == 0.0:
            continue
        cycles = t * rate
        if abs(cycles - round(cycles)) > 1e-6:
            continue
        cov = noise.measurement_cov(source)
        h = {
            MeasurementSource.LEADER_POSE: x[:3],
            MeasurementSource.FOLLOWER_POSE: x[3:],
            MeasurementSource.RELATIVE_POSE: x[:3] - x[3:],
        }[source]
        value = h + np.sqrt(np.diag(cov)) * rng.standard_normal(3)
        value[2] = wrap_angle(value[2])
        out.append(Measurement(source, value, cov, t))
    return out


def two_arc_reference(
    curvature: float,
    n_waypoints: int,
    start: tuple[float, float] = (0.0, 0.0),
    goal: tuple[float, float] = (4.5, 4.2),
) -> ReferencePath:
    """S-curve reference: arc of +curvature then -curvature, tangent-continuous.

    Both arcs share the same length, which fixes the sweep angle and the start
    heading so that the endpoint lands exactly on the goal point. Waypoints are
    sampled uniformly by arc length. A near-zero curvature degenerates to the
    straight line between the endpoints.
    """
    if n_waypoints < 2:
        raise ValueError("need at least two waypoints")
    if curvature < 0.0:
        raise ValueError("curvature must be positive")
    p0 = np.asarray(start, dtype=float)
    p1 = np.asarray(goal, dtype=float)
    chord = p1 - p0
    dist = float(np.linalg.norm(chord))
    heading = math.atan2(chord[1], chord[0])
    if curvature * dist < 1e-9:
        pts = np.linspace(p0, p1, n_waypoints)
        return ReferencePath([Pose2(x, y, heading) for x, y in pts])

    ratio = dist * curvature / 4.0
    if ratio > 1.0:
        raise ValueError("curvature too high for a symmetric two-arc path to the goal")
    sweep = 2.0 * math.asin(ratio)  # turn angle of each arc
    th0 = heading - 0.5 * sweep
    radius = 1.0 / curvature
    half_len = radius * sweep
    total = 2.0 * half_len

    c1 = p0 + radius * np.array([-math.sin(th0), math.cos(th0)])
    th_j = th0 + sweep
    pj = c1 + radius * np.array([math.sin(th_j), -math.cos(th_j)])
    c2 = pj + radius * np.array([math.sin(th_j), -math.cos(th_j)])

    waypoints = []
    for s in np.linspace(0.0, total, n_waypoints):
        if s <= half_len:
            th = th0 + curvature * s
            p = c1 + radius * np.array([math.sin(th), -math.cos(th)])
        else:
            th = th_j - curvature * (s - half_len)
            p = c2 + radius * np.array([-math.sin(th), math.cos(th)])
        waypoints.append(Pose2(p[0], p[1], th))
    return waypoints_path(waypoints)


def waypoints_path(waypoints: list[Pose2]) -> ReferencePath:
    return ReferencePath(list(waypoints))


def initial_assembly(start: Pose2, l: float) -> AssemblyState:
    c, s = math.cos(start.theta), math.sin(start.theta)
    leader = Pose2(start.x + 0.5 * l * c, start.y + 0.5 * l * s, start.theta)
    follower = Pose2(start.x - 0.5 * l * c, start.y - 0.5 * l * s, start.theta)
    return AssemblyState(leader, follower)


def build_reference_path(scenario: Scenario, l: float) -> ReferencePath:
    spec = scenario.reference
    if spec.kind == "two_arc":
        return two_arc_reference(
            spec.curvature, spec.n_waypoints,
            (scenario.start.x, scenario.start.y), spec.target,
        )
    if spec.kind == "waypoints":
        if not spec.waypoints:
            raise ScenarioError("reference.kind=waypoints requires a waypoint list")
        return waypoints_path(spec.waypoints)
    if spec.kind == "planner":
        try:
            return plan_path(scenario.grid, scenario.search, scenario.start, scenario.goal, l)
        except Exception as e:
            raise ScenarioError(f"global planning failed: no path ({e})") from e
    raise ScenarioError(f"unknown reference kind {spec.kind!r}")


def detect_pedestrians(
    leader: Pose2,
    pedestrians: list[Pedestrian],
    t: float,
    sigma: float,
    rng: np.random.Generator,
):
    """Noisy polar detections in the rear-facing leader frame (delta = 0 behind)."""
    rear = Pose2(leader.x, leader.y, wrap_angle(leader.theta + math.pi))
    out = []
    for ped in pedestrians:
        pos = ped.position(t) + sigma * rng.standard_normal(2)
        polar = to_polar_frame(rear, (pos[0], pos[1]))
        out.append(PolarPoint(max(0.0, polar.rho - ped.radius), polar.delta))
    return out


def run(scenario: Scenario, path: ReferencePath | None = None) -> tuple[Outcome, list[TickRecord]]:
    """Run the closed loop to goal, timeout, or integrity violation.

    `path` short-circuits reference construction when the caller already
    planned (the CLI does, to also emit the waypoint CSV).
    """
    l = desired_distance(scenario.trolleys)
    if path is None:
        path = build_reference_path(scenario, l)
    dense = densify_waypoints(path.waypoints)

    dt = scenario.mpc.dt
    model = UnicyclePairModel(dt)
    rng_process = np.random.default_rng([scenario.seed, 0])
    rng_meas = np.random.default_rng([scenario.seed, 1])
    rng_ped = np.random.default_rng([scenario.seed, 2])

    truth = initial_assembly(scenario.start, l)
    sigma0 = max(scenario.initial_belief_sigma, 1e-4)
    mean0 = truth.as_array() + scenario.initial_belief_sigma * rng_meas.standard_normal(6)
    belief = BeliefState(AssemblyState.from_array(mean0), sigma0**2 * np.eye(6), 0.0)
    stats = FilterStats()

    applied_cov = scenario.noise.process_cov(ControlInput(0, 0, 0, 0))
    behavior_cfg = scenario.behavior
    selector = BehaviorSelector(
        Roi(behavior_cfg.rho_min, behavior_cfg.rho_max),
        stop_eps=behavior_cfg.stop_eps,
        debounce_ticks=behavior_cfg.debounce_ticks,
    )

    goal_xy = np.array([scenario.goal.x, scenario.goal.y])
    records: list[TickRecord] = []
    u_applied = ControlInput(0.0, 0.0, 0.0, 0.0)
    lag_v_follower = 0.0
    warm = None
    outcome = Outcome.TIMEOUT

    k = 0
    while k * dt < scenario.duration_cap:
        t = k * dt
        if np.linalg.norm(truth.midpoint() - goal_xy) <= scenario.goal_tolerance:
            outcome = Outcome.GOAL_REACHED
            break

        if k > 0:
            belief = predict(belief, u_applied, dt, applied_cov)
        for m in synthesize_measurements(truth, scenario.noise, scenario.rates, t, rng_meas):
            belief = update(belief, m, stats=stats)

        obstacles = detect_pedestrians(
            truth.leader, scenario.pedestrians, t, scenario.noise.pedestrian_xy, rng_ped
        )
        speed = max(abs(u_applied.v_leader), abs(u_applied.v_follower))
        raw_cls = selector.tick(obstacles, speed)
        mode = selector.mode

        tick_limits = scenario.limits
        if mode == BehaviorMode.LIMITED_NAVIGATION:
            frac = behavior_cfg.limited_fraction
            tick_limits = replace(
                scenario.limits,
                v_max_leader=frac * scenario.limits.v_max_leader,
                v_max_follower=frac * scenario.limits.v_max_follower,
            )

        reference = build_reference(path, belief.mean, l, scenario.mpc.lookahead)
        problem = MpcProblem(
            scenario.mpc.horizon, dt, belief.mean, l, reference,
            scenario.weights, tick_limits, u_applied,
        )
        solution = solve(problem, warm_start=warm)
        warm = solution

        _, shaped = shape_command(
            mode, first_command(solution), scenario.limits,
            behavior_cfg.decel_rate, dt, u_applied, behavior_cfg.limited_fraction,
        )

        r = relative_distance(truth)
        phi_l, phi_f = bearing_offsets(truth)
        tracking = float(distances_to_polyline(truth.midpoint()[None, :], dense)[0])
        records.append(TickRecord(
            t=t,
            truth=truth,
            est_mean=belief.mean,
            cov_trace=float(np.trace(belief.covariance)),
            command=shaped,
            mode=mode.value,
            classification=raw_cls.label(),
            r_error=r - l,
            phi_leader=phi_l,
            phi_follower=phi_f,
            tracking_error=tracking,
            mpc_objective=solution.objective,
            mpc_iterations=solution.iterations,
            mpc_solve_time=solution.solve_time,
        ))

        if abs(r - l) > scenario.integrity_threshold:
            outcome = Outcome.INTEGRITY_VIOLATION
            break

        plant_cmd = shaped
        if scenario.follower_lag_tau > 0.0:
            alpha = dt / (scenario.follower_lag_tau + dt)
            lag_v_follower += alpha * (shaped.v_follower - lag_v_follower)
            plant_cmd = ControlInput(
                shaped.v_leader, shaped.w_leader, lag_v_follower, shaped.w_follower
            )
        applied_cov = scenario.noise.process_cov(plant_cmd)
        stepped = step_pair(model, truth, plant_cmd).as_array()
        stepped += np.sqrt(np.diag(applied_cov)) * rng_process.standard_normal(6)
        stepped[2] = wrap_angle(stepped[2])
        stepped[5] = wrap_angle(stepped[5])
        truth = AssemblyState.from_array(stepped)

        u_applied = shaped
        k += 1

    return outcome, records
