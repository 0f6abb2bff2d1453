"""Four-mode behavior arbitration around detected pedestrians.

Obstacles arrive as polar points in the leader-centered detection frame whose
zero bearing points straight back along the trolley stack, so the frontal
blocking sector is centered at delta = pi. The region of interest is the
annulus sector delta in [pi/3, 5pi/3] (the wedge behind the leader, where the
trolleys are, is excluded); its frontal core is delta in [2pi/3, 4pi/3].

Mode transitions:

    Navigation        --Front-->     Deceleration
    Navigation        --SideOnly-->  LimitedNavigation
    Deceleration      --Clear-->     Navigation
    Deceleration      --speed<eps--> Waiting
    Waiting           --Clear-->     Navigation
    Waiting           --SideOnly-->  LimitedNavigation
    LimitedNavigation --Front-->     Deceleration
    LimitedNavigation --Clear-->     Navigation

Everything else self-loops.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum, IntEnum

from .geometry import ControlInput, PolarPoint
from .nmpc import MpcLimits

ROI_DELTA_MIN = math.pi / 3
ROI_DELTA_MAX = 5 * math.pi / 3
FRONT_DELTA_MIN = 2 * math.pi / 3
FRONT_DELTA_MAX = 4 * math.pi / 3

DEFAULT_STOP_EPS = 0.02
DEFAULT_LIMITED_FRACTION = 0.5


@dataclass(frozen=True)
class Roi:
    rho_min: float = 0.3
    rho_max: float = 3.0

    def __post_init__(self):
        if not 0.0 < self.rho_min < self.rho_max:
            raise ValueError("need 0 < rho_min < rho_max")


class BehaviorMode(str, Enum):
    NAVIGATION = "Navigation"
    DECELERATION = "Deceleration"
    WAITING = "Waiting"
    LIMITED_NAVIGATION = "LimitedNavigation"


class Classification(IntEnum):
    """Ordered by severity so 'adding an obstacle never moves toward Clear'."""

    CLEAR = 0
    SIDE_ONLY = 1
    FRONT = 2

    def label(self) -> str:
        return {0: "Clear", 1: "SideOnly", 2: "Front"}[int(self)]


def classify(obstacles: list[PolarPoint], roi: Roi) -> Classification:
    """Classify the obstacle set: frontal blocker beats side presence beats clear."""
    worst = Classification.CLEAR
    for ob in obstacles:
        if not (roi.rho_min <= ob.rho <= roi.rho_max):
            continue
        if not (ROI_DELTA_MIN <= ob.delta <= ROI_DELTA_MAX):
            continue
        if FRONT_DELTA_MIN <= ob.delta <= FRONT_DELTA_MAX:
            return Classification.FRONT
        worst = Classification.SIDE_ONLY
    return worst


def transition(
    mode: BehaviorMode,
    classification: Classification,
    current_speed: float,
    stop_eps: float = DEFAULT_STOP_EPS,
) -> BehaviorMode:
    """One step of the mode automaton (pure, no hysteresis)."""
    cls = classification
    if mode == BehaviorMode.NAVIGATION:
        if cls == Classification.FRONT:
            return BehaviorMode.DECELERATION
        if cls == Classification.SIDE_ONLY:
            return BehaviorMode.LIMITED_NAVIGATION
        return BehaviorMode.NAVIGATION
    if mode == BehaviorMode.DECELERATION:
        if cls == Classification.CLEAR:
            return BehaviorMode.NAVIGATION
        if current_speed < stop_eps:
            return BehaviorMode.WAITING
        return BehaviorMode.DECELERATION
    if mode == BehaviorMode.WAITING:
        if cls == Classification.CLEAR:
            return BehaviorMode.NAVIGATION
        if cls == Classification.SIDE_ONLY:
            return BehaviorMode.LIMITED_NAVIGATION
        return BehaviorMode.WAITING
    # LimitedNavigation
    if cls == Classification.FRONT:
        return BehaviorMode.DECELERATION
    if cls == Classification.CLEAR:
        return BehaviorMode.NAVIGATION
    return BehaviorMode.LIMITED_NAVIGATION


@dataclass(frozen=True)
class BehaviorOutput:
    mode: BehaviorMode
    v_scale: float
    v_limit_override: tuple[float, float] | None = None  # (leader, follower) caps

    def __post_init__(self):
        if not 0.0 <= self.v_scale <= 1.0:
            raise ValueError("v_scale must lie in [0, 1]")


def _ramp_component(v: float, target_mag: float) -> float:
    mag = min(abs(v), target_mag)
    return math.copysign(mag, v)


def shape_command(
    mode: BehaviorMode,
    u: ControlInput,
    limits: MpcLimits,
    decel_rate: float,
    dt: float,
    u_prev: ControlInput,
    limited_fraction: float = DEFAULT_LIMITED_FRACTION,
) -> tuple[BehaviorOutput, ControlInput]:
    """Shape the planner command for the active mode.

    Deceleration ramps each linear speed down by decel_rate*dt per tick from
    the previously applied command, scaling the paired angular rate to keep
    curvature; Waiting zeroes everything; LimitedNavigation clamps speeds to
    the reduced cap and reports it so the next solve inherits the limit.
    """
    if mode == BehaviorMode.NAVIGATION:
        return BehaviorOutput(mode, 1.0), u

    if mode == BehaviorMode.WAITING:
        return BehaviorOutput(mode, 0.0), ControlInput(0.0, 0.0, 0.0, 0.0)

    if mode == BehaviorMode.DECELERATION:
        drop = decel_rate * dt
        vl = _ramp_component(u.v_leader, max(0.0, abs(u_prev.v_leader) - drop))
        vf = _ramp_component(u.v_follower, max(0.0, abs(u_prev.v_follower) - drop))
        scale_l = vl / u.v_leader if u.v_leader != 0.0 else 0.0
        scale_f = vf / u.v_follower if u.v_follower != 0.0 else 0.0
        shaped = ControlInput(vl, u.w_leader * scale_l, vf, u.w_follower * scale_f)
        before = max(abs(u.v_leader), abs(u.v_follower))
        after = max(abs(vl), abs(vf))
        # ramp progress for logging; the zero fraction is reserved for Waiting
        v_scale = 1.0 if before == 0.0 else max(after / before, 1e-3)
        return BehaviorOutput(mode, v_scale), shaped

    # LimitedNavigation
    cap_l = limited_fraction * limits.v_max_leader
    cap_f = limited_fraction * limits.v_max_follower
    vl = _ramp_component(u.v_leader, cap_l)
    vf = _ramp_component(u.v_follower, cap_f)
    scale_l = vl / u.v_leader if u.v_leader != 0.0 else 1.0
    scale_f = vf / u.v_follower if u.v_follower != 0.0 else 1.0
    shaped = ControlInput(vl, u.w_leader * scale_l, vf, u.w_follower * scale_f)
    return BehaviorOutput(mode, limited_fraction, (cap_l, cap_f)), shaped


class BehaviorSelector:
    """Stateful wrapper: debounces classifications and advances the automaton.

    A classification must persist two consecutive ticks before it can drive a
    transition, which stops mode chatter under noisy detections.
    """

    def __init__(self, roi: Roi | None = None, stop_eps: float = DEFAULT_STOP_EPS,
                 debounce_ticks: int = 2):
        self.roi = roi if roi is not None else Roi()
        self.stop_eps = stop_eps
        self.debounce_ticks = debounce_ticks
        self.mode = BehaviorMode.NAVIGATION
        self._stable = Classification.CLEAR
        self._pending = Classification.CLEAR
        self._pending_count = debounce_ticks

    def tick(self, obstacles: list[PolarPoint], current_speed: float) -> Classification:
        """Update the debounced classification and the mode; returns the raw class."""
        raw = classify(obstacles, self.roi)
        if raw == self._pending:
            self._pending_count += 1
        else:
            self._pending = raw
            self._pending_count = 1
        if self._pending_count >= self.debounce_ticks:
            self._stable = raw
        self.mode = transition(self.mode, self._stable, current_speed, self.stop_eps)
        return raw

    @property
    def stable_classification(self) -> Classification:
        return self._stable
