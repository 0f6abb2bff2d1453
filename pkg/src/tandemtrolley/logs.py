"""Trajectory log CSV serialization.

The main log is byte-deterministic for a fixed scenario and seed: floats are
written with repr (shortest round-trip form) and wall-clock quantities are
excluded. Solve times go to a separate timing sidecar because they can never
be byte-stable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .geometry import Pose2

FLOAT_COLUMNS = [
    "t",
    "truth_xl", "truth_yl", "truth_thl", "truth_xf", "truth_yf", "truth_thf",
    "est_xl", "est_yl", "est_thl", "est_xf", "est_yf", "est_thf",
    "cov_trace",
    "cmd_vl", "cmd_wl", "cmd_vf", "cmd_wf",
    "r_error", "phi_leader", "phi_follower", "tracking_error",
    "mpc_objective",
]
INT_COLUMNS = ["mpc_iterations"]
STR_COLUMNS = ["mode", "classification"]
ALL_COLUMNS = FLOAT_COLUMNS + STR_COLUMNS + INT_COLUMNS


class LogFormatError(ValueError):
    pass


@dataclass
class TrajectoryLog:
    header: dict
    columns: dict[str, np.ndarray]
    modes: list[str]
    classifications: list[str]

    @property
    def length(self) -> int:
        return len(self.modes)

    def column(self, name: str) -> np.ndarray:
        return self.columns[name]


def _record_row(rec) -> list[str]:
    truth = rec.truth.as_array()
    est = rec.est_mean.as_array()
    cmd = rec.command.as_array()
    floats = [
        rec.t,
        *truth, *est,
        rec.cov_trace,
        *cmd,
        rec.r_error, rec.phi_leader, rec.phi_follower, rec.tracking_error,
        rec.mpc_objective,
    ]
    return [repr(float(v)) for v in floats] + [rec.mode, rec.classification, str(rec.mpc_iterations)]


def write_trajectory_log(records, path: str | Path, scenario_hash: str, config_echo: dict) -> None:
    path = Path(path)
    lines = [
        f"# scenario_sha256={scenario_hash}",
        f"# config={json.dumps(config_echo, sort_keys=True, separators=(',', ':'))}",
        ",".join(ALL_COLUMNS),
    ]
    lines.extend(",".join(_record_row(rec)) for rec in records)
    path.write_text("\n".join(lines) + "\n")


def read_trajectory_log(path: str | Path) -> TrajectoryLog:
    path = Path(path)
    header: dict = {}
    rows: list[list[str]] = []
    names: list[str] | None = None
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        if not line.strip():
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if "=" in body:
                key, value = body.split("=", 1)
                header[key.strip()] = value
            continue
        if names is None:
            names = line.split(",")
            missing = [c for c in ALL_COLUMNS if c not in names]
            if missing:
                raise LogFormatError(f"{path}: missing columns {missing}")
            continue
        cells = line.split(",")
        if len(cells) != len(names):
            raise LogFormatError(f"{path}:{lineno}: expected {len(names)} cells, got {len(cells)}")
        rows.append(cells)
    if names is None:
        raise LogFormatError(f"{path}: no header row")

    idx = {name: i for i, name in enumerate(names)}
    columns = {
        name: np.array([float(r[idx[name]]) for r in rows]) for name in FLOAT_COLUMNS
    }
    for name in INT_COLUMNS:
        columns[name] = np.array([int(r[idx[name]]) for r in rows])
    modes = [r[idx["mode"]] for r in rows]
    classifications = [r[idx["classification"]] for r in rows]
    return TrajectoryLog(header, columns, modes, classifications)


def write_timing(records, path: str | Path) -> None:
    path = Path(path)
    lines = ["t,solve_time_s"]
    lines.extend(f"{repr(float(r.t))},{repr(float(r.mpc_solve_time))}" for r in records)
    path.write_text("\n".join(lines) + "\n")


def read_timing(path: str | Path) -> np.ndarray:
    lines = Path(path).read_text().splitlines()
    return np.array([float(line.split(",")[1]) for line in lines[1:] if line.strip()])


def write_reference_csv(waypoints: list[Pose2], path: str | Path) -> None:
    path = Path(path)
    lines = ["x,y,theta"]
    lines.extend(f"{repr(w.x)},{repr(w.y)},{repr(w.theta)}" for w in waypoints)
    path.write_text("\n".join(lines) + "\n")


def read_reference_csv(path: str | Path) -> list[Pose2]:
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0].split(",")[:3] != ["x", "y", "theta"]:
        raise LogFormatError(f"{path}: expected 'x,y,theta' header")
    out = []
    for line in lines[1:]:
        if not line.strip():
            continue
        x, y, th = (float(v) for v in line.split(",")[:3])
        out.append(Pose2(x, y, th))
    return out
