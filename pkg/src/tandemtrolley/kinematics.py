"""Discrete-time motion models of the robot-trolley assembly.

Covers the concatenated unicycle pair that the motion planner and estimator
share, the derived formation quantities (relative distance and bearing
offsets), the two-steer virtual vehicle used by the global planner, and the
trolley-count-to-separation mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AssemblyState, ControlInput, Pose2, wrap_angle


class SingularConfigurationError(ValueError):
    """Raised when coincident robots make a formation quantity undefined."""


@dataclass(frozen=True)
class UnicyclePairModel:
    """Two concatenated discrete-time unicycles sharing one sampling interval."""

    dt: float

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


def input_matrix(x: np.ndarray, dt: float) -> np.ndarray:
    """6x4 input matrix G(x): per-robot heading-projected velocity columns."""
    thl, thf = x[2], x[5]
    g = np.zeros((6, 4))
    g[0, 0] = math.cos(thl)
    g[1, 0] = math.sin(thl)
    g[2, 1] = 1.0
    g[3, 2] = math.cos(thf)
    g[4, 2] = math.sin(thf)
    g[5, 3] = 1.0
    return dt * g


def step_pair_array(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """One Euler step of the pair dynamics on raw arrays, headings wrapped."""
    thl, thf = x[2], x[5]
    out = np.array([
        x[0] + dt * u[0] * math.cos(thl),
        x[1] + dt * u[0] * math.sin(thl),
        wrap_angle(x[2] + dt * u[1]),
        x[3] + dt * u[2] * math.cos(thf),
        x[4] + dt * u[2] * math.sin(thf),
        wrap_angle(x[5] + dt * u[3]),
    ])
    return out


def step_pair(model: UnicyclePairModel, x: AssemblyState, u: ControlInput) -> AssemblyState:
    """Advance the assembly one sampling interval: x' = x + G(x) u."""
    return AssemblyState.from_array(step_pair_array(x.as_array(), u.as_array(), model.dt))


def pair_jacobian(x: np.ndarray, u: np.ndarray, dt: float) -> np.ndarray:
    """State Jacobian of step_pair: identity plus the heading/velocity couplings."""
    thl, thf = x[2], x[5]
    f = np.eye(6)
    f[0, 2] = -dt * u[0] * math.sin(thl)
    f[1, 2] = dt * u[0] * math.cos(thl)
    f[3, 5] = -dt * u[2] * math.sin(thf)
    f[4, 5] = dt * u[2] * math.cos(thf)
    return f


def relative_distance(x: AssemblyState) -> float:
    """Euclidean distance between the two robot centers."""
    return float(np.linalg.norm(x.leader.position - x.follower.position))


def bearing_offsets(x: AssemblyState) -> tuple[float, float]:
    """Angle of each robot's heading relative to the follower-to-leader line.

    Returns (phi_leader, phi_follower), both wrapped into (-pi, pi]. Raises
    SingularConfigurationError when the robots are coincident.
    """
    dx = x.leader.x - x.follower.x
    dy = x.leader.y - x.follower.y
    if dx == 0.0 and dy == 0.0:
        raise SingularConfigurationError("bearing offsets undefined for coincident robots")
    line = math.atan2(dy, dx)
    return wrap_angle(x.leader.theta - line), wrap_angle(x.follower.theta - line)


@dataclass(frozen=True)
class VirtualVehicleState:
    """Two-steer bicycle abstraction of the whole assembly.

    `pose` is the reference point on the assembly (the midpoint between the
    robots); the two steers are the front and rear steering angles.
    """

    pose: Pose2
    steer_leader: float
    steer_follower: float


def step_virtual_vehicle(s: VirtualVehicleState, v: float, dt: float, l: float) -> Pose2:
    """One step of the two-steer virtual vehicle.

    beta = arctan((tan(phi_L) + tan(phi_F)) / 2)
    x'   = x + v dt cos(theta + beta)
    y'   = y + v dt sin(theta + beta)
    th'  = theta + (v cos(beta) / l) dt (tan(phi_L) - tan(phi_F))

    Both steers must satisfy |phi| < pi/2 and l > 0.
    """
    if l <= 0.0:
        raise ValueError("wheelbase l must be positive")
    if abs(s.steer_leader) >= math.pi / 2 or abs(s.steer_follower) >= math.pi / 2:
        raise ValueError("steer angles must lie strictly inside (-pi/2, pi/2)")
    tl = math.tan(s.steer_leader)
    tf = math.tan(s.steer_follower)
    beta = math.atan(0.5 * (tl + tf))
    x = s.pose.x + v * dt * math.cos(s.pose.theta + beta)
    y = s.pose.y + v * dt * math.sin(s.pose.theta + beta)
    theta = s.pose.theta + (v * math.cos(beta) / l) * dt * (tl - tf)
    return Pose2(x, y, theta)


@dataclass(frozen=True)
class TrolleyStack:
    """Trolley count plus the affine count-to-separation map parameters."""

    count: int
    base_length: float = 0.70
    per_trolley_increment: float = 0.32

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("trolley count must be >= 1")
        if self.base_length <= 0.0 or self.per_trolley_increment <= 0.0:
            raise ValueError("length parameters must be positive")


def desired_distance(stack: TrolleyStack) -> float:
    """Desired robot-to-robot separation for a given stack size (affine in count)."""
    return stack.base_length + (stack.count - 1) * stack.per_trolley_increment
