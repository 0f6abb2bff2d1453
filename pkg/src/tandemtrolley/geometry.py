"""Planar geometry value types and angle arithmetic shared by all modules."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi].

    Raises ValueError on non-finite input.
    """
    if not math.isfinite(a):
        raise ValueError(f"cannot wrap non-finite angle {a!r}")
    # remainder() lands in [-pi, pi]; fold the open end onto +pi.
    w = math.remainder(a, TWO_PI)
    if w <= -math.pi:
        w += TWO_PI
    return w


def angle_diff(a: float, b: float) -> float:
    """Shortest signed difference a - b, wrapped into (-pi, pi]."""
    return wrap_angle(a - b)


@dataclass(frozen=True)
class Pose2:
    """Planar pose (x, y, theta), heading CCW-positive from +x, theta kept in (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))

    @property
    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta])

    @staticmethod
    def from_array(v) -> "Pose2":
        return Pose2(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class AssemblyState:
    """Joint 6-D pose of the leader/follower pair."""

    leader: Pose2
    follower: Pose2

    def as_array(self) -> np.ndarray:
        """Flatten to [xL, yL, thL, xF, yF, thF]."""
        return np.concatenate([self.leader.as_array(), self.follower.as_array()])

    @staticmethod
    def from_array(v) -> "AssemblyState":
        return AssemblyState(Pose2.from_array(v[0:3]), Pose2.from_array(v[3:6]))

    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.leader.position + self.follower.position)


@dataclass(frozen=True)
class ControlInput:
    """Joint velocity command [vL, wL, vF, wF]."""

    v_leader: float
    w_leader: float
    v_follower: float
    w_follower: float

    def __post_init__(self):
        for f in (self.v_leader, self.w_leader, self.v_follower, self.w_follower):
            if not math.isfinite(f):
                raise ValueError("control input components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.v_leader, self.w_leader, self.v_follower, self.w_follower])

    @staticmethod
    def from_array(v) -> "ControlInput":
        return ControlInput(float(v[0]), float(v[1]), float(v[2]), float(v[3]))


ZERO_COMMAND = ControlInput(0.0, 0.0, 0.0, 0.0)


@dataclass(frozen=True)
class PolarPoint:
    """Point in a pose-centered polar frame: range rho >= 0, bearing delta in [0, 2*pi)."""

    rho: float
    delta: float

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError("rho must be non-negative")
        if not 0.0 <= self.delta < TWO_PI:
            raise ValueError("delta must lie in [0, 2*pi)")


def to_polar_frame(origin: Pose2, point: tuple[float, float]) -> PolarPoint:
    """Express a world point in the polar frame centered on `origin`.

    delta is the bearing of the point measured CCW from the origin's heading,
    mapped into [0, 2*pi); rho is the Euclidean distance. A coincident point
    gets delta = 0 by convention.
    """
    dx = point[0] - origin.x
    dy = point[1] - origin.y
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        return PolarPoint(0.0, 0.0)
    delta = math.atan2(dy, dx) - origin.theta
    delta = delta % TWO_PI
    if delta >= TWO_PI:  # guard against fp roundup at the seam
        delta = 0.0
    return PolarPoint(rho, delta)
