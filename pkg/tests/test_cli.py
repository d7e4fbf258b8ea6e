"""Command-line interface: subcommands, outputs, exit codes."""

import json

import pytest

from swarmloc import cli
from swarmloc.simulate import read_trace

SMALL_SCENARIO = {
    "n_robots": 3,
    "field_size": 200.0,
    "formation": "circle",
    "trajectory": "static",
    "duration": 1.0,
    "predict_rate": 10.0,
    "sensor_rate": 5.0,
    "sensor": {
        "sigma_dist": 0.0,
        "sigma_angle": 0.0,
        "outlier_probability": 0.0,
        "max_range": 1000.0,
        "angular_resolution": 0.0,
    },
    "seed": 4,
}


def write_scenario(tmp_path, data, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def simulate(tmp_path, scenario=SMALL_SCENARIO, extra=()):
    scenario_path = write_scenario(tmp_path, scenario)
    trace_path = str(tmp_path / "trace.jsonl")
    code = cli.main(["simulate", "--scenario", scenario_path, "--out", trace_path, *extra])
    return code, trace_path


# ---------------------------------------------------------------------------
# simulate


def test_simulate_writes_trace_and_summary(tmp_path, capsys):
    code, trace_path = simulate(tmp_path)
    assert code == 0
    # 1 s at 10 Hz is 10 steps, reported with the initial timestep included
    assert capsys.readouterr().out == "11 timesteps, 3 robots\n"
    trace = read_trace(trace_path)
    assert trace.n_steps == 10
    assert trace.scenario.n_robots == 3


def test_simulate_seed_override(tmp_path):
    code, trace_path = simulate(tmp_path, extra=["--seed", "99"])
    assert code == 0
    assert read_trace(trace_path).scenario.seed == 99


def test_simulate_is_deterministic(tmp_path, capsys):
    scenario_path = write_scenario(tmp_path, SMALL_SCENARIO)
    first = tmp_path / "a.jsonl"
    second = tmp_path / "b.jsonl"
    assert cli.main(["simulate", "--scenario", scenario_path, "--out", str(first)]) == 0
    assert cli.main(["simulate", "--scenario", scenario_path, "--out", str(second)]) == 0
    assert first.read_bytes() == second.read_bytes()


def test_simulate_missing_n_robots_exits_2(tmp_path, capsys):
    scenario = dict(SMALL_SCENARIO)
    del scenario["n_robots"]
    code, _ = simulate(tmp_path, scenario)
    assert code == 2
    assert "n_robots" in capsys.readouterr().err


def test_simulate_zero_duration_exits_2(tmp_path, capsys):
    code, _ = simulate(tmp_path, dict(SMALL_SCENARIO, duration=0.0))
    assert code == 2
    assert "duration" in capsys.readouterr().err


def test_simulate_invalid_json_exits_2(tmp_path, capsys):
    scenario_path = tmp_path / "bad.json"
    scenario_path.write_text("{nope")
    code = cli.main(
        ["simulate", "--scenario", str(scenario_path), "--out", str(tmp_path / "t.jsonl")]
    )
    assert code == 2
    assert "bad.json" in capsys.readouterr().err


def test_simulate_missing_file_exits_2(tmp_path, capsys):
    code = cli.main(
        ["simulate", "--scenario", str(tmp_path / "nope.json"), "--out", str(tmp_path / "t")]
    )
    assert code == 2
    assert "error" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# localize


def test_localize_direct_mode_outputs(tmp_path, capsys):
    _, trace_path = simulate(tmp_path)
    out_base = str(tmp_path / "report")
    code = cli.main(["localize", "--trace", trace_path, "--out", out_base, "--mode", "direct"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert "mode=direct" in stdout
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["mode"] == "direct"
    assert max(report["mean_position_error_cm"]) < 1e-9
    csv_lines = (tmp_path / "report.csv").read_text().splitlines()
    assert csv_lines[0] == "t,mean_error_cm,robot_0,robot_1,robot_2"
    assert len(csv_lines) == 1 + len(report["timestamps"])


def test_localize_writes_state_records(tmp_path):
    # positive sensor noise keeps the innovation covariance invertible
    noisy = dict(
        SMALL_SCENARIO,
        sensor=dict(SMALL_SCENARIO["sensor"], sigma_dist=0.5, sigma_angle=0.01),
    )
    _, trace_path = simulate(tmp_path, noisy)
    states_path = tmp_path / "states.jsonl"
    code = cli.main(
        [
            "localize", "--trace", trace_path, "--out", str(tmp_path / "r"),
            "--mode", "ukf", "--states", str(states_path),
        ]
    )
    assert code == 0
    records = [json.loads(line) for line in states_path.read_text().splitlines()]
    assert records
    assert {"t", "robot_id", "x", "y", "theta", "cov"} == set(records[0])


def test_localize_initialization_failure_exits_3(tmp_path, capsys):
    # 30 cm sensing on a 50 cm circle yields no observations at all
    blind = dict(SMALL_SCENARIO, sensor=dict(SMALL_SCENARIO["sensor"], max_range=30.0))
    _, trace_path = simulate(tmp_path, blind)
    code = cli.main(["localize", "--trace", trace_path, "--out", str(tmp_path / "r")])
    assert code == 3
    assert "observability" in capsys.readouterr().err


def test_localize_malformed_trace_exits_2(tmp_path, capsys):
    trace_path = tmp_path / "junk.jsonl"
    trace_path.write_text("not json\n")
    code = cli.main(["localize", "--trace", str(trace_path), "--out", str(tmp_path / "r")])
    assert code == 2
    assert "junk.jsonl" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# calibrate


def exact_power_law_csv(tmp_path, amplitude=5000.0, exponent=-2.0):
    ranges = [20.0, 40.0, 60.0, 90.0, 130.0, 180.0, 250.0]
    lines = ["range_cm,magnitude"]
    for r in ranges:
        magnitude = (r / amplitude) ** (1.0 / exponent)
        lines.append(f"{r!r},{magnitude!r}")
    path = tmp_path / "samples.csv"
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_calibrate_exact_fit(tmp_path, capsys):
    samples = exact_power_law_csv(tmp_path)
    out_path = tmp_path / "calibration.json"
    code = cli.main(["calibrate", "--samples", samples, "--out", str(out_path)])
    assert code == 0
    assert "exponent" in capsys.readouterr().out
    payload = json.loads(out_path.read_text())
    assert set(payload) == {"amplitude", "exponent", "n_samples_used", "rms_log_residual"}
    assert payload["exponent"] == pytest.approx(-2.0, abs=1e-9)
    assert payload["amplitude"] == pytest.approx(5000.0, rel=1e-9)
    assert payload["n_samples_used"] == 7
    assert payload["rms_log_residual"] == pytest.approx(0.0, abs=1e-12)


def test_calibrate_saturation_excludes_samples(tmp_path):
    samples = exact_power_law_csv(tmp_path)
    out_path = tmp_path / "calibration.json"
    code = cli.main(
        ["calibrate", "--samples", samples, "--out", str(out_path), "--saturation", "40"]
    )
    assert code == 0
    # ranges 20 and 40 sit at or below the saturation cutoff
    assert json.loads(out_path.read_text())["n_samples_used"] == 5


def test_calibrate_too_few_rows_exits_3(tmp_path, capsys):
    path = tmp_path / "samples.csv"
    path.write_text("range_cm,magnitude\n20.0,2.5\n40.0,1.2\n")
    code = cli.main(["calibrate", "--samples", str(path), "--out", str(tmp_path / "c.json")])
    assert code == 3
    assert "error" in capsys.readouterr().err


def test_calibrate_bad_header_exits_2(tmp_path, capsys):
    path = tmp_path / "samples.csv"
    path.write_text("distance,signal\n20.0,2.5\n")
    code = cli.main(["calibrate", "--samples", str(path), "--out", str(tmp_path / "c.json")])
    assert code == 2
    assert "range_cm,magnitude" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# reproduce


def test_reproduce_fig6a_passes_and_writes_files(tmp_path, capsys):
    out_dir = tmp_path / "fig6a"
    code = cli.main(["reproduce", "--figure", "fig6a", "--out", str(out_dir)])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.startswith("fig6a: PASS")
    for name in ("fig6a_positions.csv", "fig6a_errors.csv", "fig6a_summary.json"):
        assert (out_dir / name).exists()
    summary = json.loads((out_dir / "fig6a_summary.json").read_text())
    assert summary["passed"] is True
    assert summary["metrics"]["max_aligned_error_cm"] < 1e-3


def test_reproduce_failure_exits_3(tmp_path, capsys, monkeypatch):
    monkeypatch.setattr(cli, "run_preset", lambda *a, **k: {"passed": False})
    monkeypatch.setattr(cli, "summary_line", lambda s: "stub: FAIL")
    code = cli.main(["reproduce", "--figure", "fig10", "--out", str(tmp_path)])
    assert code == 3
    assert capsys.readouterr().out == "stub: FAIL\n"


# ---------------------------------------------------------------------------
# argument parsing


def test_missing_subcommand_exits_2():
    with pytest.raises(SystemExit) as exc:
        cli.main([])
    assert exc.value.code == 2


def test_unknown_figure_exits_2(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["reproduce", "--figure", "fig99", "--out", str(tmp_path)])
    assert exc.value.code == 2


def test_simulate_requires_out_flag(tmp_path):
    with pytest.raises(SystemExit) as exc:
        cli.main(["simulate", "--scenario", str(tmp_path / "s.json")])
    assert exc.value.code == 2
