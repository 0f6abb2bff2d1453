"""Scenario file parsing, validation, and round-trip serialization.

Scenarios are JSON with nested sections. Parsing is strict: unknown keys are
errors that name the full key path, as are out-of-range values. Every field
not present takes the documented default (see README).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import fields as dataclass_fields
from pathlib import Path

import numpy as np

from .geometry import Pose2
from .grid import OccupancyGrid, grid_from_ascii, load_pgm_map
from .hybrid_astar import SearchConfig, footprint_collides
from .kinematics import TrolleyStack
from .nmpc import MpcLimits, MpcWeights
from .sim import (
    BehaviorConfig,
    MpcConfig,
    NoiseConfig,
    Pedestrian,
    Rates,
    ReferenceSpec,
    Scenario,
)


class ScenarioParseError(ValueError):
    """Parse or validation failure; the message names the offending key path."""


def _require(cond: bool, msg: str):
    if not cond:
        raise ScenarioParseError(msg)


def _check_keys(section: dict, allowed: set[str], prefix: str):
    for key in section:
        if key not in allowed:
            raise ScenarioParseError(f"unknown key '{prefix}{key}'")


def _pose(value, path: str) -> Pose2:
    _require(isinstance(value, list) and len(value) == 3, f"{path} must be [x, y, theta]")
    try:
        return Pose2(float(value[0]), float(value[1]), float(value[2]))
    except (TypeError, ValueError) as e:
        raise ScenarioParseError(f"{path}: {e}") from e


def _positive(value, path: str) -> float:
    v = float(value)
    _require(v > 0, f"{path} must be positive")
    return v


def _parse_map(section, base_dir: Path) -> OccupancyGrid:
    _require(isinstance(section, dict), "map must be an object")
    if "ascii" in section:
        _check_keys(section, {"ascii", "resolution", "origin"}, "map.")
        _require("resolution" in section, "map.resolution is required")
        rows = section["ascii"]
        _require(isinstance(rows, list) and all(isinstance(r, str) for r in rows),
                 "map.ascii must be a list of strings")
        origin = _pose(section.get("origin", [0.0, 0.0, 0.0]), "map.origin")
        try:
            return grid_from_ascii(rows, _positive(section["resolution"], "map.resolution"), origin)
        except ValueError as e:
            raise ScenarioParseError(f"map.ascii: {e}") from e
    if "image" in section:
        _check_keys(section, {"image", "meta"}, "map.")
        _require("meta" in section, "map.meta is required alongside map.image")
        image = base_dir / section["image"]
        meta = base_dir / section["meta"]
        if not image.exists():
            raise ScenarioParseError(f"map.image: file not found: {image}")
        try:
            return load_pgm_map(image, meta)
        except ValueError as e:
            raise ScenarioParseError(f"map.image: {e}") from e
    raise ScenarioParseError("map must contain either 'ascii' or 'image'")


def _parse_simple(section, cls, prefix: str, positives=(), converters=None):
    """Fill a flat dataclass from a dict section, strict on unknown keys."""
    converters = converters or {}
    names = {f.name for f in dataclass_fields(cls)}
    _check_keys(section, names, prefix)
    kwargs = {}
    for key, value in section.items():
        if key in converters:
            kwargs[key] = converters[key](value, f"{prefix}{key}")
        elif key in positives:
            kwargs[key] = _positive(value, f"{prefix}{key}")
        else:
            kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as e:
        raise ScenarioParseError(f"{prefix.rstrip('.')}: {e}") from e


def _matrix(value, path: str, size: int) -> np.ndarray:
    if isinstance(value, (int, float)):
        return float(value) * np.eye(size)
    arr = np.asarray(value, dtype=float)
    if arr.shape == (size,):
        return np.diag(arr)
    _require(arr.shape == (size, size), f"{path} must be a scalar, length-{size} diagonal, or {size}x{size} matrix")
    return arr


def _parse_weights(section) -> MpcWeights:
    _check_keys(section, {"P_leader", "P_follower", "R", "lambda_r", "lambda_phi", "w_slack"},
                "weights.")
    kwargs = {}
    if "P_leader" in section:
        kwargs["P_leader"] = _matrix(section["P_leader"], "weights.P_leader", 2)
    if "P_follower" in section:
        kwargs["P_follower"] = _matrix(section["P_follower"], "weights.P_follower", 2)
    if "R" in section:
        kwargs["R"] = _matrix(section["R"], "weights.R", 4)
    for key in ("lambda_r", "lambda_phi", "w_slack"):
        if key in section:
            kwargs[key] = float(section[key])
    try:
        return MpcWeights(**kwargs)
    except ValueError as e:
        raise ScenarioParseError(f"weights: {e}") from e


def _parse_limits(section, bbox) -> MpcLimits:
    names = {f.name for f in dataclass_fields(MpcLimits)}
    _check_keys(section, names, "limits.")
    kwargs = {}
    for key in ("v_max_leader", "v_max_follower", "w_max", "a_max", "alpha_max"):
        if key in section:
            kwargs[key] = _positive(section[key], f"limits.{key}")
    if "workspace" in section:
        ws = section["workspace"]
        _require(
            isinstance(ws, list) and len(ws) == 2 and all(len(b) == 2 for b in ws),
            "limits.workspace must be [[xmin, xmax], [ymin, ymax]]",
        )
        kwargs["workspace"] = ((float(ws[0][0]), float(ws[0][1])), (float(ws[1][0]), float(ws[1][1])))
    else:
        kwargs["workspace"] = bbox
    try:
        return MpcLimits(**kwargs)
    except ValueError as e:
        raise ScenarioParseError(f"limits: {e}") from e


def _parse_pedestrians(section) -> list[Pedestrian]:
    _require(isinstance(section, list), "pedestrians must be a list")
    out = []
    seen = set()
    for i, ped in enumerate(section):
        _check_keys(ped, {"id", "radius", "script"}, f"pedestrians[{i}].")
        pid = ped.get("id", f"ped{i}")
        _require(pid not in seen, f"pedestrians[{i}]: duplicate id '{pid}'")
        seen.add(pid)
        script_raw = ped.get("script", [])
        _require(isinstance(script_raw, list) and script_raw,
                 f"pedestrians[{i}] ('{pid}'): script must be a nonempty list")
        script = []
        for j, knot in enumerate(script_raw):
            _require(isinstance(knot, list) and len(knot) == 3,
                     f"pedestrians[{i}] ('{pid}').script[{j}] must be [t, x, y]")
            script.append((float(knot[0]), (float(knot[1]), float(knot[2]))))
        try:
            out.append(Pedestrian(pid, script, radius=float(ped.get("radius", 0.3))))
        except ValueError as e:
            raise ScenarioParseError(f"pedestrians[{i}] ('{pid}'): {e}") from e
    return out


def _parse_reference(section) -> ReferenceSpec:
    _check_keys(section, {"kind", "curvature", "n_waypoints", "target", "waypoints"}, "reference.")
    kind = section.get("kind", "planner")
    _require(kind in ("planner", "two_arc", "waypoints"),
             "reference.kind must be one of planner | two_arc | waypoints")
    spec = ReferenceSpec(kind=kind)
    if "curvature" in section:
        spec.curvature = _positive(section["curvature"], "reference.curvature")
    if "n_waypoints" in section:
        spec.n_waypoints = int(section["n_waypoints"])
        _require(spec.n_waypoints >= 2, "reference.n_waypoints must be >= 2")
    if "target" in section:
        tgt = section["target"]
        _require(isinstance(tgt, list) and len(tgt) == 2, "reference.target must be [x, y]")
        spec.target = (float(tgt[0]), float(tgt[1]))
    if "waypoints" in section:
        spec.waypoints = [_pose(w, f"reference.waypoints[{i}]") for i, w in enumerate(section["waypoints"])]
    if kind == "waypoints":
        _require(bool(spec.waypoints), "reference.waypoints is required when kind=waypoints")
    return spec


TOP_LEVEL_KEYS = {
    "name", "map", "trolleys", "start", "goal", "goal_tolerance", "pedestrians",
    "limits", "weights", "search", "noise", "rates", "mpc", "behavior",
    "reference", "seed", "duration_cap", "integrity_threshold",
    "initial_belief_sigma", "follower_lag_tau",
}


def parse_scenario_dict(raw: dict, base_dir: Path | str = ".") -> Scenario:
    _require(isinstance(raw, dict), "scenario root must be an object")
    _check_keys(raw, TOP_LEVEL_KEYS, "")
    for key in ("map", "start", "goal"):
        _require(key in raw, f"missing required key '{key}'")

    grid = _parse_map(raw["map"], Path(base_dir))
    xmin, xmax, ymin, ymax = grid.world_extent()
    bbox = ((xmin, xmax), (ymin, ymax))

    scenario = Scenario(
        grid=grid,
        start=_pose(raw["start"], "start"),
        goal=_pose(raw["goal"], "goal"),
        name=str(raw.get("name", "scenario")),
        trolleys=_parse_simple(
            {"count": 3, **raw.get("trolleys", {})}, TrolleyStack, "trolleys.",
            positives={"base_length", "per_trolley_increment"},
            converters={"count": lambda v, p: int(v)},
        ),
        goal_tolerance=_positive(raw.get("goal_tolerance", 0.3), "goal_tolerance"),
        pedestrians=_parse_pedestrians(raw.get("pedestrians", [])),
        limits=_parse_limits(raw.get("limits", {}), bbox),
        weights=_parse_weights(raw.get("weights", {})),
        search=_parse_simple(
            raw.get("search", {}), SearchConfig, "search.",
            positives={
                "xy_resolution", "theta_resolution", "steer_max", "primitive_speed",
                "primitive_duration", "footprint_half_length", "footprint_half_width",
                "goal_xy_tolerance", "goal_theta_tolerance",
            },
            converters={"steer_samples": lambda v, p: int(v)},
        ),
        noise=_parse_simple(raw.get("noise", {}), NoiseConfig, "noise."),
        rates=_parse_simple(raw.get("rates", {}), Rates, "rates."),
        mpc=_parse_simple(
            raw.get("mpc", {}), MpcConfig, "mpc.",
            positives={"dt", "lookahead"},
            converters={"horizon": lambda v, p: int(v)},
        ),
        behavior=_parse_simple(
            raw.get("behavior", {}), BehaviorConfig, "behavior.",
            positives={"rho_min", "rho_max", "stop_eps", "decel_rate"},
            converters={"debounce_ticks": lambda v, p: int(v)},
        ),
        reference=_parse_reference(raw.get("reference", {})),
        seed=int(raw.get("seed", 0)),
        duration_cap=_positive(raw.get("duration_cap", 60.0), "duration_cap"),
        integrity_threshold=_positive(raw.get("integrity_threshold", 0.15), "integrity_threshold"),
        initial_belief_sigma=float(raw.get("initial_belief_sigma", 0.01)),
        follower_lag_tau=float(raw.get("follower_lag_tau", 0.0)),
    )
    for fname, value in (("noise", scenario.noise), ("rates", scenario.rates)):
        for f in dataclass_fields(value):
            v = getattr(value, f.name)
            _require(isinstance(v, (int, float)) and math.isfinite(v) and v >= 0,
                     f"{fname}.{f.name} must be a nonnegative number")
    _require(scenario.mpc.horizon >= 1, "mpc.horizon must be >= 1")
    _require(scenario.behavior.rho_min < scenario.behavior.rho_max,
             "behavior.rho_min must be smaller than behavior.rho_max")
    _require(0 < scenario.behavior.limited_fraction <= 1.0,
             "behavior.limited_fraction must lie in (0, 1]")
    _require(not footprint_collides(grid, scenario.start, scenario.search),
             "start: assembly footprint collides with the map")
    _require(not footprint_collides(grid, scenario.goal, scenario.search),
             "goal: assembly footprint collides with the map")
    return scenario


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.exists():
        raise ScenarioParseError(f"scenario file not found: {path}")
    try:
        raw = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"{path}:{e.lineno}: invalid JSON ({e.msg})") from e
    return parse_scenario_dict(raw, base_dir=path.parent)


def _grid_to_ascii(grid: OccupancyGrid) -> list[str]:
    rows = []
    for iy in range(grid.height - 1, -1, -1):
        rows.append("".join("#" if grid.cells[iy, ix] else "." for ix in range(grid.width)))
    return rows


def serialize_scenario(s: Scenario) -> dict:
    """Scenario back to its JSON form (maps always serialize as ascii art)."""
    return {
        "name": s.name,
        "map": {
            "ascii": _grid_to_ascii(s.grid),
            "resolution": s.grid.resolution,
            "origin": [s.grid.origin.x, s.grid.origin.y, s.grid.origin.theta],
        },
        "trolleys": {
            "count": s.trolleys.count,
            "base_length": s.trolleys.base_length,
            "per_trolley_increment": s.trolleys.per_trolley_increment,
        },
        "start": [s.start.x, s.start.y, s.start.theta],
        "goal": [s.goal.x, s.goal.y, s.goal.theta],
        "goal_tolerance": s.goal_tolerance,
        "pedestrians": [
            {
                "id": p.id,
                "radius": p.radius,
                "script": [[t, pos[0], pos[1]] for t, pos in p.script],
            }
            for p in s.pedestrians
        ],
        "limits": {
            "v_max_leader": s.limits.v_max_leader,
            "v_max_follower": s.limits.v_max_follower,
            "w_max": s.limits.w_max,
            "a_max": s.limits.a_max,
            "alpha_max": s.limits.alpha_max,
            "workspace": [list(s.limits.workspace[0]), list(s.limits.workspace[1])],
        },
        "weights": {
            "P_leader": s.weights.P_leader.tolist(),
            "P_follower": s.weights.P_follower.tolist(),
            "R": s.weights.R.tolist(),
            "lambda_r": s.weights.lambda_r,
            "lambda_phi": s.weights.lambda_phi,
            "w_slack": s.weights.w_slack,
        },
        "search": {f.name: getattr(s.search, f.name) for f in dataclass_fields(SearchConfig)},
        "noise": {f.name: getattr(s.noise, f.name) for f in dataclass_fields(NoiseConfig)},
        "rates": {f.name: getattr(s.rates, f.name) for f in dataclass_fields(Rates)},
        "mpc": {f.name: getattr(s.mpc, f.name) for f in dataclass_fields(MpcConfig)},
        "behavior": {f.name: getattr(s.behavior, f.name) for f in dataclass_fields(BehaviorConfig)},
        "reference": {
            "kind": s.reference.kind,
            "curvature": s.reference.curvature,
            "n_waypoints": s.reference.n_waypoints,
            "target": list(s.reference.target),
            "waypoints": [[w.x, w.y, w.theta] for w in s.reference.waypoints],
        },
        "seed": s.seed,
        "duration_cap": s.duration_cap,
        "integrity_threshold": s.integrity_threshold,
        "initial_belief_sigma": s.initial_belief_sigma,
        "follower_lag_tau": s.follower_lag_tau,
    }


def scenario_hash(s: Scenario) -> str:
    canonical = json.dumps(serialize_scenario(s), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def scenarios_equal(a: Scenario, b: Scenario) -> bool:
    return serialize_scenario(a) == serialize_scenario(b)
