"""Command-line front end.

Subcommands: simulate (scenario -> trace), localize (trace -> error
report), calibrate (CSV samples -> power-law fit), reproduce (canned
figure presets with pass/fail thresholds).

Exit codes: 0 success, 2 input/schema error, 3 numerical or
initialization failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .direct import SolverConfig
from .errors import (
    CalibrationError,
    EstimationDivergedError,
    InitializationError,
    SwarmLocError,
)
from .pipeline import run_localization, write_report_csv, write_report_json, write_state_records
from .presets import FIGURES, run_preset, summary_line
from .sensing import PowerLawRangeModel, load_calibration_samples
from .simulate import load_scenario, read_trace, run, write_trace


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmloc",
        description="Centralized relative localization for simulated robot swarms.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario and record its trace")
    p_sim.add_argument("--scenario", required=True, help="scenario JSON file")
    p_sim.add_argument("--out", required=True, help="output trace path (JSON lines)")
    p_sim.add_argument("--seed", type=int, default=None,
                       help="override the scenario's seed")

    p_loc = sub.add_parser(
        "localize",
        help="estimate poses over a recorded trace and measure aligned error",
        description=(
            "Writes <out>.csv with columns t, mean_error_cm, robot_0..robot_{N-1} "
            "(per-robot aligned position error in cm) and <out>.json with the "
            "full report including heading errors and direct-solve statistics."
        ),
    )
    p_loc.add_argument("--trace", required=True, help="trace file from 'simulate'")
    p_loc.add_argument("--out", required=True,
                       help="output basename; writes <out>.csv and <out>.json")
    p_loc.add_argument("--mode", choices=["direct", "ukf", "full"], default="full")
    p_loc.add_argument("--seed", type=int, default=0, help="solver restart seed")
    p_loc.add_argument("--states", default=None,
                       help="also write per-tick state records to this JSON-lines path")

    p_cal = sub.add_parser("calibrate", help="fit the range power law from CSV samples")
    p_cal.add_argument("--samples", required=True,
                       help="CSV with header range_cm,magnitude")
    p_cal.add_argument("--saturation", type=float, default=0.0,
                       help="exclude samples with range at or below this (cm)")
    p_cal.add_argument("--out", required=True, help="output calibration JSON")

    p_rep = sub.add_parser("reproduce", help="run a canned figure preset")
    p_rep.add_argument("--figure", required=True, choices=list(FIGURES))
    p_rep.add_argument("--out", required=True, help="output directory for data files")
    p_rep.add_argument("--seed", type=int, default=0, help="base seed for the preset")
    return parser


def _cmd_simulate(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    trace = run(scenario)
    write_trace(trace, args.out)
    print(f"{trace.n_steps + 1} timesteps, {scenario.n_robots} robots")
    return 0


def _cmd_localize(args) -> int:
    trace = read_trace(args.trace)
    config = SolverConfig(seed=args.seed)
    result = run_localization(trace, mode=args.mode, solver_config=config)
    write_report_csv(result.report, f"{args.out}.csv")
    write_report_json(result.report, f"{args.out}.json")
    if args.states:
        write_state_records(result.state_records, args.states)
    report = result.report
    print(
        f"mode={report.mode}: {len(report.timestamps)} evaluations, "
        f"time-averaged mean error {report.time_averaged_error:.3f} cm"
    )
    return 0


def _cmd_calibrate(args) -> int:
    samples = load_calibration_samples(args.samples)
    model = PowerLawRangeModel(saturation_range=args.saturation)
    model.fit([m for _, m in samples], [r for r, _ in samples])
    payload = {
        "amplitude": model.amplitude_,
        "exponent": model.exponent_,
        "n_samples_used": model.n_samples_used_,
        "rms_log_residual": model.rms_log_residual_,
    }
    with open(args.out, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    print(
        f"amplitude={model.amplitude_:.6g}, exponent={model.exponent_:.6g}, "
        f"{model.n_samples_used_} samples used"
    )
    return 0


def _cmd_reproduce(args) -> int:
    summary = run_preset(args.figure, args.out, base_seed=args.seed)
    print(summary_line(summary))
    return 0 if summary["passed"] else 3


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "localize": _cmd_localize,
        "calibrate": _cmd_calibrate,
        "reproduce": _cmd_reproduce,
    }
    try:
        return handlers[args.command](args)
    except (CalibrationError, EstimationDivergedError, InitializationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SwarmLocError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
