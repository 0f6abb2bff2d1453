import json
import math

import numpy as np
import pytest

from tandemtrolley.cli import main


@pytest.fixture
def quick_scenario(tmp_path):
    """Small open-floor run that reaches the goal in a few seconds."""
    raw = {
        "name": "quick",
        "map": {"ascii": ["." * 32 for _ in range(12)], "resolution": 0.25},
        "start": [1.2, 1.5, 0.0],
        "goal": [4.5, 1.5, 0.0],
        "reference": {"kind": "waypoints",
                      "waypoints": [[1.2 + 0.25 * i, 1.5, 0.0] for i in range(16)]},
        "seed": 4,
        "duration_cap": 40.0,
    }
    path = tmp_path / "quick.json"
    path.write_text(json.dumps(raw))
    return path


def test_run_happy_path(quick_scenario, tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["run", "--scenario", str(quick_scenario), "--out", str(out)])
    assert code == 0
    assert (out / "quick_trajectory.csv").exists()
    assert (out / "quick_timing.csv").exists()
    assert (out / "quick_reference.csv").exists()
    summary = json.loads((out / "quick_summary.json").read_text())
    assert summary["outcome"] == "GoalReached"
    assert summary["ticks"] > 0
    assert "GoalReached" in capsys.readouterr().out


def test_summary_matches_independent_reader(quick_scenario, tmp_path):
    out = tmp_path / "out"
    main(["run", "--scenario", str(quick_scenario), "--out", str(out)])
    summary = json.loads((out / "quick_summary.json").read_text())

    # plain-text re-reading of the emitted CSVs, no package helpers
    lines = [l for l in (out / "quick_trajectory.csv").read_text().splitlines()
             if l and not l.startswith("#")]
    names = lines[0].split(",")
    rows = [dict(zip(names, line.split(","))) for line in lines[1:]]
    r_err_mm = np.array([float(r["r_error"]) for r in rows]) * 1000.0
    assert abs(r_err_mm.mean() - summary["distance_error_mean_mm"]) < 1e-9
    assert abs(r_err_mm.std() - summary["distance_error_std_mm"]) < 1e-9
    track = np.array([float(r["tracking_error"]) for r in rows])
    assert abs(track.max() - summary["tracking_max_m"]) < 1e-9
    assert abs(track.mean() - summary["tracking_mean_m"]) < 1e-9

    timing = [float(l.split(",")[1]) for l in
              (out / "quick_timing.csv").read_text().splitlines()[1:] if l]
    assert abs(np.percentile(timing, 95) * 1000 - summary["solve_p95_ms"]) < 1e-9


def test_metrics_subcommand_recomputes(quick_scenario, tmp_path, capsys):
    out = tmp_path / "out"
    main(["run", "--scenario", str(quick_scenario), "--out", str(out)])
    capsys.readouterr()
    summary = json.loads((out / "quick_summary.json").read_text())
    code = main([
        "metrics",
        "--log", str(out / "quick_trajectory.csv"),
        "--ref", str(out / "quick_reference.csv"),
        "--timing", str(out / "quick_timing.csv"),
    ])
    assert code == 0
    recomputed = json.loads(capsys.readouterr().out)
    for key in ("tracking_mean_m", "tracking_max_m", "distance_error_mean_mm", "solve_p95_ms"):
        assert recomputed[key] == pytest.approx(summary[key], abs=1e-9)


def test_run_missing_scenario(tmp_path, capsys):
    code = main(["run", "--scenario", str(tmp_path / "nope.json")])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_run_invalid_scenario(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({
        "map": {"ascii": ["...."], "resolution": 0.5},
        "start": [0.5, 0.25, 0],
        "goal": [1.5, 0.25, 0],
        "limits": {"v_max_leader": -1.0},
    }))
    code = main(["run", "--scenario", str(bad)])
    assert code == 1
    assert "limits.v_max_leader" in capsys.readouterr().err


def test_run_walled_goal_reports_no_path(tmp_path, capsys):
    rows = ["." * 20 for _ in range(10)]
    rows = [r[:10] + "#" + r[11:] for r in rows]
    sc = tmp_path / "walled.json"
    sc.write_text(json.dumps({
        "name": "walled",
        "map": {"ascii": rows, "resolution": 0.5},
        "start": [1.5, 2.5, 0.0],
        "goal": [8.5, 2.5, 0.0],
        "search": {"footprint_half_length": 0.4, "footprint_half_width": 0.25},
    }))
    code = main(["run", "--scenario", str(sc)])
    assert code == 1
    assert "no path" in capsys.readouterr().err


def test_seed_determinism_byte_identical(quick_scenario, tmp_path):
    noisy = json.loads(quick_scenario.read_text())
    noisy["duration_cap"] = 5.0
    sc = tmp_path / "noisy.json"
    sc.write_text(json.dumps(noisy))
    out1, out2 = tmp_path / "o1", tmp_path / "o2"
    main(["run", "--scenario", str(sc), "--seed", "7", "--out", str(out1)])
    main(["run", "--scenario", str(sc), "--seed", "7", "--out", str(out2)])
    b1 = (out1 / "quick_trajectory.csv").read_bytes()
    b2 = (out2 / "quick_trajectory.csv").read_bytes()
    assert b1 == b2


def test_override_changes_behavior(quick_scenario, tmp_path):
    out = tmp_path / "o"
    code = main([
        "run", "--scenario", str(quick_scenario), "--out", str(out),
        "--override", "limits.v_max_leader=0.3",
        "--override", "duration_cap=2.0",
    ])
    assert code == 2  # capped before the goal
    lines = (out / "quick_trajectory.csv").read_text().splitlines()
    names = lines[2].split(",")
    vl = names.index("cmd_vl")
    speeds = [abs(float(l.split(",")[vl])) for l in lines[3:]]
    assert max(speeds) <= 0.3 + 1e-12


def test_bad_override_reports(tmp_path, quick_scenario, capsys):
    code = main(["run", "--scenario", str(quick_scenario), "--override", "nonsense"])
    assert code == 1
    assert "--override" in capsys.readouterr().err


def test_plan_subcommand(tmp_path):
    sc = tmp_path / "plan.json"
    sc.write_text(json.dumps({
        "name": "planned",
        "map": {"ascii": ["." * 40 for _ in range(40)], "resolution": 0.25},
        "start": [1.5, 5.0, 0.0],
        "goal": [8.0, 5.0, 0.0],
        "search": {"footprint_half_length": 0.5, "footprint_half_width": 0.3},
    }))
    out = tmp_path / "o"
    code = main(["plan", "--scenario", str(sc), "--out", str(out)])
    assert code == 0
    ref = (out / "planned_reference.csv").read_text().splitlines()
    assert ref[0] == "x,y,theta"
    assert len(ref) > 10


def test_scenario_validate(quick_scenario, tmp_path, capsys):
    assert main(["scenario", "validate", str(quick_scenario)]) == 0
    assert "ok:" in capsys.readouterr().out
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["scenario", "validate", str(bad)]) == 1
    assert "invalid" in capsys.readouterr().err


def test_env_var_out_dir(quick_scenario, tmp_path, monkeypatch):
    monkeypatch.setenv("TANDEMTROLLEY_OUT", str(tmp_path / "envout"))
    monkeypatch.chdir(tmp_path)
    code = main(["run", "--scenario", str(quick_scenario)])
    assert code == 0
    assert (tmp_path / "envout" / "quick_trajectory.csv").exists()
