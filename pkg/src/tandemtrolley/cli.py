"""Command-line entry points: run, plan, metrics, scenario validate."""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .hybrid_astar import PlanningError
from .kinematics import desired_distance
from .logs import (
    read_reference_csv,
    read_timing,
    read_trajectory_log,
    write_reference_csv,
    write_timing,
    write_trajectory_log,
)
from .metrics import compute_metrics
from .scenario_io import (
    ScenarioParseError,
    parse_scenario_dict,
    scenario_hash,
    serialize_scenario,
)
from .sim import Outcome, ScenarioError, build_reference_path, run

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_TIMEOUT = 2
EXIT_INTEGRITY = 3

_OUTCOME_EXIT = {
    Outcome.GOAL_REACHED: EXIT_OK,
    Outcome.TIMEOUT: EXIT_TIMEOUT,
    Outcome.INTEGRITY_VIOLATION: EXIT_INTEGRITY,
}


def _load_scenario(path: str, seed: int | None, overrides: list[str]):
    p = Path(path)
    if not p.exists():
        raise ScenarioParseError(f"scenario file not found: {p}")
    try:
        raw = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise ScenarioParseError(f"{p}:{e.lineno}: invalid JSON ({e.msg})") from e
    for item in overrides:
        if "=" not in item:
            raise ScenarioParseError(f"--override needs key.path=value, got {item!r}")
        key, value = item.split("=", 1)
        try:
            parsed = json.loads(value)
        except json.JSONDecodeError:
            parsed = value
        node = raw
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ScenarioParseError(f"--override {key}: '{part}' is not a section")
        node[parts[-1]] = parsed
    if seed is not None:
        raw["seed"] = seed
    return parse_scenario_dict(raw, base_dir=p.parent)


def _out_dir(arg: str | None) -> Path:
    out = Path(arg or os.environ.get("TANDEMTROLLEY_OUT", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _cmd_run(args) -> int:
    try:
        scenario = _load_scenario(args.scenario, args.seed, args.override)
        l = desired_distance(scenario.trolleys)
        path = build_reference_path(scenario, l)
        outcome, records = run(scenario, path=path)
    except (ScenarioParseError, ScenarioError, PlanningError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR

    out = _out_dir(args.out)
    sha = scenario_hash(scenario)
    config_echo = {"name": scenario.name, "seed": scenario.seed}
    log_path = out / f"{scenario.name}_trajectory.csv"
    write_trajectory_log(records, log_path, sha, config_echo)
    write_timing(records, out / f"{scenario.name}_timing.csv")
    write_reference_csv(path.waypoints, out / f"{scenario.name}_reference.csv")

    log = read_trajectory_log(log_path)
    summary = compute_metrics(
        log, path.waypoints,
        solve_times_s=np.array([r.mpc_solve_time for r in records]),
        dt=scenario.mpc.dt,
    )
    payload = {
        "scenario": scenario.name,
        "scenario_sha256": sha,
        "seed": scenario.seed,
        "outcome": outcome.value,
        "ticks": len(records),
        **summary.as_dict(),
    }
    (out / f"{scenario.name}_summary.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"{outcome.value}: {len(records)} ticks, logs in {out}")
    return _OUTCOME_EXIT[outcome]


def _cmd_plan(args) -> int:
    try:
        scenario = _load_scenario(args.scenario, None, args.override)
        l = desired_distance(scenario.trolleys)
        path = build_reference_path(scenario, l)
    except (ScenarioParseError, ScenarioError, PlanningError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    out = _out_dir(args.out)
    dest = out / f"{scenario.name}_reference.csv"
    write_reference_csv(path.waypoints, dest)
    print(f"{len(path.waypoints)} waypoints -> {dest}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    try:
        log = read_trajectory_log(args.log)
        reference = read_reference_csv(args.ref)
        times = read_timing(args.timing) if args.timing else None
        summary = compute_metrics(log, reference, solve_times_s=times, dt=args.dt)
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    text = json.dumps(summary.as_dict(), indent=2, sort_keys=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    print(text)
    return EXIT_OK


def _cmd_scenario(args) -> int:
    if args.action != "validate":
        print(f"error: unknown scenario action {args.action!r}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    try:
        scenario = _load_scenario(args.scenario, None, [])
    except ScenarioParseError as e:
        print(f"invalid: {e}", file=sys.stderr)
        return EXIT_CONFIG_ERROR
    echo = serialize_scenario(scenario)
    print(f"ok: {scenario.name} ({echo['map']['resolution']} m grid, "
          f"{scenario.trolleys.count} trolleys, {len(scenario.pedestrians)} pedestrians)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tandemtrolley",
        description="Tandem trolley transport: plan, simulate, and summarize runs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario end to end")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--out", default=None, help="output dir (default $TANDEMTROLLEY_OUT or ./out)")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--override", action="append", default=[], metavar="KEY.PATH=VALUE")
    p_run.set_defaults(func=_cmd_run)

    p_plan = sub.add_parser("plan", help="global path only, emits the waypoint CSV")
    p_plan.add_argument("--scenario", required=True)
    p_plan.add_argument("--out", default=None)
    p_plan.add_argument("--override", action="append", default=[])
    p_plan.set_defaults(func=_cmd_plan)

    p_met = sub.add_parser("metrics", help="recompute summary statistics from a log")
    p_met.add_argument("--log", required=True)
    p_met.add_argument("--ref", required=True)
    p_met.add_argument("--timing", default=None)
    p_met.add_argument("--dt", type=float, default=0.1)
    p_met.add_argument("--out", default=None)
    p_met.set_defaults(func=_cmd_metrics)

    p_sc = sub.add_parser("scenario", help="scenario file utilities")
    p_sc.add_argument("action", choices=["validate"])
    p_sc.add_argument("scenario")
    p_sc.set_defaults(func=_cmd_scenario)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
