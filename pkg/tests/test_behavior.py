import math

import numpy as np
import pytest

from tandemtrolley.behavior import (
    BehaviorMode,
    BehaviorSelector,
    Classification,
    Roi,
    classify,
    shape_command,
    transition,
)
from tandemtrolley.geometry import ControlInput, PolarPoint
from tandemtrolley.nmpc import MpcLimits

ROI = Roi(rho_min=0.3, rho_max=3.0)
LIMITS = MpcLimits()
NAV = BehaviorMode.NAVIGATION
DEC = BehaviorMode.DECELERATION
WAIT = BehaviorMode.WAITING
LIM = BehaviorMode.LIMITED_NAVIGATION


def test_classify_examples():
    mid = 0.5 * (ROI.rho_min + ROI.rho_max)
    assert classify([PolarPoint(mid, math.pi)], ROI) == Classification.FRONT
    assert classify([PolarPoint(mid, math.pi / 2)], ROI) == Classification.SIDE_ONLY
    assert classify([PolarPoint(ROI.rho_max + 0.5, math.pi)], ROI) == Classification.CLEAR


def test_classify_empty_is_clear():
    assert classify([], ROI) == Classification.CLEAR
    assert classify([], Roi(0.1, 50.0)) == Classification.CLEAR


def test_classify_excluded_rear_wedge():
    # delta = 0 points straight back along the trolleys: never a detection
    assert classify([PolarPoint(1.0, 0.0)], ROI) == Classification.CLEAR
    assert classify([PolarPoint(1.0, math.pi / 6)], ROI) == Classification.CLEAR
    assert classify([PolarPoint(1.0, 2 * math.pi - 0.1)], ROI) == Classification.CLEAR


def test_classify_front_beats_side():
    obs = [PolarPoint(1.0, math.pi / 2), PolarPoint(2.0, math.pi)]
    assert classify(obs, ROI) == Classification.FRONT


def test_classify_radial_band():
    assert classify([PolarPoint(0.1, math.pi)], ROI) == Classification.CLEAR
    assert classify([PolarPoint(0.3, math.pi)], ROI) == Classification.FRONT
    assert classify([PolarPoint(3.0, math.pi)], ROI) == Classification.FRONT


def test_classify_monotone_in_obstacles():
    rng = np.random.default_rng(31)
    for _ in range(200):
        obs = [
            PolarPoint(rng.uniform(0, 4), rng.uniform(0, 2 * math.pi - 1e-9))
            for _ in range(rng.integers(0, 5))
        ]
        base = classify(obs, ROI)
        extra = PolarPoint(rng.uniform(0, 4), rng.uniform(0, 2 * math.pi - 1e-9))
        assert classify(obs + [extra], ROI) >= base


def test_roi_validation():
    with pytest.raises(ValueError):
        Roi(0.0, 1.0)
    with pytest.raises(ValueError):
        Roi(2.0, 1.0)


FULL_TABLE = [
    (NAV, Classification.FRONT, 0.6, DEC),
    (NAV, Classification.SIDE_ONLY, 0.6, LIM),
    (NAV, Classification.CLEAR, 0.6, NAV),
    (DEC, Classification.CLEAR, 0.6, NAV),
    (DEC, Classification.FRONT, 0.6, DEC),
    (DEC, Classification.FRONT, 0.005, WAIT),
    (DEC, Classification.SIDE_ONLY, 0.005, WAIT),
    (DEC, Classification.SIDE_ONLY, 0.6, DEC),
    (WAIT, Classification.CLEAR, 0.0, NAV),
    (WAIT, Classification.SIDE_ONLY, 0.0, LIM),
    (WAIT, Classification.FRONT, 0.0, WAIT),
    (LIM, Classification.FRONT, 0.3, DEC),
    (LIM, Classification.CLEAR, 0.3, NAV),
    (LIM, Classification.SIDE_ONLY, 0.3, LIM),
]


@pytest.mark.parametrize("mode,cls,speed,want", FULL_TABLE)
def test_transition_table(mode, cls, speed, want):
    assert transition(mode, cls, speed, stop_eps=0.02) == want


def test_transition_deterministic():
    rng = np.random.default_rng(32)
    stream = [Classification(rng.integers(0, 3)) for _ in range(200)]
    speeds = rng.uniform(0, 0.7, 200)

    def run():
        mode = NAV
        seq = []
        for cls, sp in zip(stream, speeds):
            mode = transition(mode, cls, sp)
            seq.append(mode)
        return seq

    assert run() == run()


def test_shape_waiting_zeroes():
    out, cmd = shape_command(WAIT, ControlInput(0.5, 0.1, 0.5, 0.1), LIMITS, 1.0, 0.1,
                             ControlInput(0.5, 0.1, 0.5, 0.1))
    assert cmd == ControlInput(0, 0, 0, 0)
    assert out.v_scale == 0.0


def test_shape_navigation_identity():
    u = ControlInput(0.4, -0.2, 0.5, 0.1)
    out, cmd = shape_command(NAV, u, LIMITS, 1.0, 0.1, u)
    assert cmd == u
    assert out.v_scale == 1.0
    assert out.v_limit_override is None


def test_shape_deceleration_ramp_keeps_curvature():
    u = ControlInput(0.6, 0.12, 0.6, -0.18)
    out, cmd = shape_command(DEC, u, LIMITS, 1.0, 0.1, u)
    assert cmd.v_leader == pytest.approx(0.5)
    assert cmd.v_follower == pytest.approx(0.5)
    # curvature w/v preserved to machine precision
    assert cmd.w_leader / cmd.v_leader == pytest.approx(u.w_leader / u.v_leader, abs=1e-12)
    assert cmd.w_follower / cmd.v_follower == pytest.approx(u.w_follower / u.v_follower, abs=1e-12)
    assert 0 < out.v_scale < 1


def test_shape_deceleration_reaches_zero():
    u_prev = ControlInput(0.6, 0.1, 0.7, 0.05)
    planner = ControlInput(0.6, 0.1, 0.7, 0.05)
    for _ in range(10):
        _, cmd = shape_command(DEC, planner, LIMITS, 1.0, 0.1, u_prev)
        u_prev = cmd
    assert abs(u_prev.v_leader) < 1e-12
    assert abs(u_prev.v_follower) < 1e-12
    assert abs(u_prev.w_leader) < 1e-12


def test_shape_limited_caps_and_override():
    u = ControlInput(0.6, 0.2, 0.7, 0.2)
    out, cmd = shape_command(LIM, u, LIMITS, 1.0, 0.1, u)
    assert cmd.v_leader == pytest.approx(0.5 * LIMITS.v_max_leader)
    assert cmd.v_follower == pytest.approx(0.5 * LIMITS.v_max_follower)
    assert out.v_limit_override == (0.5 * LIMITS.v_max_leader, 0.5 * LIMITS.v_max_follower)
    # commands already below the cap pass through
    slow = ControlInput(0.1, 0.05, 0.1, 0.05)
    _, cmd2 = shape_command(LIM, slow, LIMITS, 1.0, 0.1, slow)
    assert cmd2 == slow


def test_shape_never_increases_speed():
    rng = np.random.default_rng(33)
    for _ in range(300):
        mode = [NAV, DEC, WAIT, LIM][rng.integers(0, 4)]
        u = ControlInput(*rng.uniform(-0.7, 0.7, 4))
        prev = ControlInput(*rng.uniform(-0.7, 0.7, 4))
        _, cmd = shape_command(mode, u, LIMITS, 1.0, 0.1, prev)
        assert abs(cmd.v_leader) <= abs(u.v_leader) + 1e-12
        assert abs(cmd.v_follower) <= abs(u.v_follower) + 1e-12
        assert abs(cmd.w_leader) <= abs(u.w_leader) + 1e-12
        assert abs(cmd.w_follower) <= abs(u.w_follower) + 1e-12


def test_persistent_front_reaches_waiting_in_bounded_ticks():
    # ramp from v_max at decel_rate*dt per tick, Waiting one tick after stop
    decel_rate, dt = 1.0, 0.1
    v_max = max(LIMITS.v_max_leader, LIMITS.v_max_follower)
    budget = math.ceil(v_max / (decel_rate * dt))
    selector = BehaviorSelector(ROI, stop_eps=0.02)
    front = [PolarPoint(1.0, math.pi)]
    u_applied = ControlInput(LIMITS.v_max_leader, 0.0, LIMITS.v_max_follower, 0.0)
    planner_u = u_applied
    waiting_at = None
    for k in range(budget + 4):
        speed = max(abs(u_applied.v_leader), abs(u_applied.v_follower))
        selector.tick(front, speed)
        _, u_applied = shape_command(selector.mode, planner_u, LIMITS, decel_rate, dt, u_applied)
        if selector.mode == WAIT:
            waiting_at = k
            break
    assert waiting_at is not None
    speeds_stopped_by = budget + 1  # one tick of debounce before Deceleration engages
    assert waiting_at <= speeds_stopped_by + 1


def test_selector_debounce_blocks_single_tick_blips():
    selector = BehaviorSelector(ROI)
    front = [PolarPoint(1.0, math.pi)]
    selector.tick(front, 0.5)  # first tick of Front: no transition yet
    assert selector.mode == NAV
    selector.tick([], 0.5)  # blip gone
    assert selector.mode == NAV
    selector.tick(front, 0.5)
    assert selector.mode == NAV
    selector.tick(front, 0.5)  # persisted two ticks now
    assert selector.mode == DEC
