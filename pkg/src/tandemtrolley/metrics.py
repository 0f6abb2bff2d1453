"""Run statistics: tracking error against the densified reference, formation
distance error, speeds, per-mode time, and solver timing percentiles."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline

from .geometry import Pose2
from .logs import TrajectoryLog


@dataclass
class MetricSummary:
    tracking_mean: float
    tracking_std: float
    tracking_max: float
    distance_error_mean_mm: float
    distance_error_std_mm: float
    avg_speed: float
    completion_time: float
    mode_durations: dict[str, float]
    solve_p50_ms: float
    solve_p95_ms: float

    def as_dict(self) -> dict:
        return {
            "tracking_mean_m": self.tracking_mean,
            "tracking_std_m": self.tracking_std,
            "tracking_max_m": self.tracking_max,
            "distance_error_mean_mm": self.distance_error_mean_mm,
            "distance_error_std_mm": self.distance_error_std_mm,
            "avg_speed_mps": self.avg_speed,
            "completion_time_s": self.completion_time,
            "mode_durations_s": self.mode_durations,
            "solve_p50_ms": self.solve_p50_ms,
            "solve_p95_ms": self.solve_p95_ms,
        }


def densify_waypoints(waypoints: list[Pose2], factor: int = 100) -> np.ndarray:
    """Natural cubic spline through the waypoints in arc-length parameterization,
    sampled `factor` times per segment. Returns an (n, 2) polyline."""
    pts = np.array([[w.x, w.y] for w in waypoints], dtype=float)
    if len(pts) == 1:
        return pts
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    keep = np.concatenate([[True], np.diff(s) > 1e-12])
    s, pts = s[keep], pts[keep]
    if len(pts) == 1:
        return pts
    if len(pts) < 3:
        dense_s = np.linspace(s[0], s[-1], factor + 1)
        return np.column_stack([
            np.interp(dense_s, s, pts[:, 0]),
            np.interp(dense_s, s, pts[:, 1]),
        ])
    spline_x = CubicSpline(s, pts[:, 0], bc_type="natural")
    spline_y = CubicSpline(s, pts[:, 1], bc_type="natural")
    dense_s = np.linspace(s[0], s[-1], factor * (len(pts) - 1) + 1)
    return np.column_stack([spline_x(dense_s), spline_y(dense_s)])


def distances_to_polyline(points: np.ndarray, polyline: np.ndarray) -> np.ndarray:
    """Minimum point-to-segment distance from each point to the polyline."""
    points = np.atleast_2d(points)
    if len(polyline) == 1:
        return np.linalg.norm(points - polyline[0], axis=1)
    a = polyline[:-1]
    d = polyline[1:] - a
    dd = np.einsum("ij,ij->i", d, d)
    dd[dd == 0.0] = 1.0
    out = np.empty(len(points))
    for i, p in enumerate(points):
        ap = p - a
        t = np.clip(np.einsum("ij,ij->i", ap, d) / dd, 0.0, 1.0)
        closest = a + t[:, None] * d
        out[i] = np.sqrt(np.min(np.einsum("ij,ij->i", p - closest, p - closest)))
    return out


def compute_metrics(
    log: TrajectoryLog,
    reference: list[Pose2],
    solve_times_s: np.ndarray | None = None,
    dt: float = 0.1,
) -> MetricSummary:
    """Recompute the run statistics from a parsed log and the reference waypoints.

    Tracking error is the distance from the truth midpoint to the cubic
    densified reference; the distance error is the signed robot-separation
    error reported in millimeters. Solver percentiles come from the timing
    sidecar when provided, else they are NaN.
    """
    if log.length == 0:
        raise ValueError("empty trajectory log")
    midpoints = 0.5 * (
        np.column_stack([log.column("truth_xl"), log.column("truth_yl")])
        + np.column_stack([log.column("truth_xf"), log.column("truth_yf")])
    )
    dense = densify_waypoints(reference)
    tracking = distances_to_polyline(midpoints, dense)

    r_err_mm = 1000.0 * log.column("r_error")
    steps = np.linalg.norm(np.diff(midpoints, axis=0), axis=1)
    completion = log.length * dt
    durations: dict[str, float] = {}
    for mode in log.modes:
        durations[mode] = durations.get(mode, 0.0) + dt

    if solve_times_s is not None and len(solve_times_s):
        p50 = float(np.percentile(solve_times_s, 50) * 1000.0)
        p95 = float(np.percentile(solve_times_s, 95) * 1000.0)
    else:
        p50 = p95 = math.nan

    return MetricSummary(
        tracking_mean=float(tracking.mean()),
        tracking_std=float(tracking.std()),
        tracking_max=float(tracking.max()),
        distance_error_mean_mm=float(r_err_mm.mean()),
        distance_error_std_mm=float(r_err_mm.std()),
        avg_speed=float(steps.sum() / completion) if completion > 0 else 0.0,
        completion_time=completion,
        mode_durations=durations,
        solve_p50_ms=p50,
        solve_p95_ms=p95,
    )
