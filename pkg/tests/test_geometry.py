import math

import numpy as np
import pytest

from tandemtrolley.geometry import (
    AssemblyState,
    ControlInput,
    PolarPoint,
    Pose2,
    to_polar_frame,
    wrap_angle,
)


def test_wrap_angle_examples():
    assert wrap_angle(0.0) == 0.0
    assert wrap_angle(3 * math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-3 * math.pi / 2) == pytest.approx(math.pi / 2)


def test_wrap_angle_range_and_congruence():
    rng = np.random.default_rng(0)
    for a in rng.uniform(-50.0, 50.0, size=2000):
        w = wrap_angle(a)
        assert -math.pi < w <= math.pi
        assert math.isclose(math.sin(w), math.sin(a), abs_tol=1e-9)
        assert math.isclose(math.cos(w), math.cos(a), abs_tol=1e-9)


def test_wrap_angle_idempotent():
    rng = np.random.default_rng(1)
    for a in rng.uniform(-30.0, 30.0, size=500):
        w = wrap_angle(a)
        assert wrap_angle(w) == w


def test_wrap_angle_boundary():
    # -pi maps onto the closed end +pi
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(math.pi) == pytest.approx(math.pi)


def test_wrap_angle_difference_bounded():
    rng = np.random.default_rng(2)
    for a, b in rng.uniform(-20.0, 20.0, size=(500, 2)):
        assert abs(wrap_angle(a - b)) <= math.pi + 1e-15


def test_wrap_angle_rejects_nonfinite():
    for bad in (math.nan, math.inf, -math.inf):
        with pytest.raises(ValueError):
            wrap_angle(bad)


def test_pose_normalizes_heading():
    p = Pose2(1.0, 2.0, 3 * math.pi)
    assert p.theta == pytest.approx(math.pi)


def test_control_input_rejects_nonfinite():
    with pytest.raises(ValueError):
        ControlInput(0.0, math.nan, 0.0, 0.0)


def test_polar_point_invariants():
    with pytest.raises(ValueError):
        PolarPoint(-0.1, 0.0)
    with pytest.raises(ValueError):
        PolarPoint(1.0, 2 * math.pi)


def test_to_polar_frame_examples():
    p = to_polar_frame(Pose2(0, 0, 0), (1.0, 0.0))
    assert p.rho == pytest.approx(1.0)
    assert p.delta == pytest.approx(0.0)

    p = to_polar_frame(Pose2(0, 0, 0), (0.0, 1.0))
    assert p.rho == pytest.approx(1.0)
    assert p.delta == pytest.approx(math.pi / 2)

    p = to_polar_frame(Pose2(0, 0, math.pi / 2), (0.0, 2.0))
    assert p.rho == pytest.approx(2.0)
    assert p.delta == pytest.approx(0.0)


def test_to_polar_frame_coincident_convention():
    p = to_polar_frame(Pose2(3.0, -1.0, 0.7), (3.0, -1.0))
    assert p.rho == 0.0
    assert p.delta == 0.0


def test_to_polar_frame_rigid_invariance():
    # moving origin and point by the same rigid transform leaves (rho, delta) unchanged
    rng = np.random.default_rng(3)
    for _ in range(200):
        ox, oy, oth = rng.uniform(-5, 5, 3)
        px, py = rng.uniform(-5, 5, 2)
        base = to_polar_frame(Pose2(ox, oy, oth), (px, py))

        tx, ty, a = rng.uniform(-3, 3, 3)
        c, s = math.cos(a), math.sin(a)
        ox2 = c * ox - s * oy + tx
        oy2 = s * ox + c * oy + ty
        px2 = c * px - s * py + tx
        py2 = s * px + c * py + ty
        moved = to_polar_frame(Pose2(ox2, oy2, oth + a), (px2, py2))

        assert moved.rho == pytest.approx(base.rho, abs=1e-9)
        d = (moved.delta - base.delta) % (2 * math.pi)
        assert min(d, 2 * math.pi - d) < 1e-9


def test_assembly_state_array_round_trip():
    x = AssemblyState(Pose2(1, 2, 0.3), Pose2(-1, 0.5, -0.2))
    back = AssemblyState.from_array(x.as_array())
    assert back == x
    np.testing.assert_allclose(x.midpoint(), [0.0, 1.25])
