"""Command-line entry points: run, sweep, analyze, oracle.

``chainfl run``     simulate one scenario (optionally several seeds) and
                    write per-run artifacts.
``chainfl sweep``   execute a parameter grid across seeds and write the
                    grid-level index.csv.
``chainfl analyze`` re-simulate stored runs and verify the stored artifacts
                    byte-for-byte.
``chainfl oracle``  compare a degenerate run against the synchronous
                    reference FedAvg loop.

Every subcommand exits 0 iff all of its runs (or checks) succeeded.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from .config import ConfigError, ScenarioConfig, parse_config, parse_grid
from .runner import analyze_run, execute_run, run_oracle, run_sweep


def _load_config(path: str | None, seed: int | None) -> ScenarioConfig:
    text = Path(path).read_text() if path else ""
    config = parse_config(text)
    if seed is not None:
        config = replace(config, seed=seed)
    return config


def _cmd_run(args: argparse.Namespace) -> int:
    if args.runs < 1:
        raise ConfigError(f"--runs must be >= 1, got {args.runs}")
    config = _load_config(args.config, args.seed)
    if args.degenerate:
        config = config.degenerate()
    out = Path(args.out)
    failures = 0
    for offset in range(args.runs):
        scenario = replace(config, seed=config.seed + offset)
        run_dir = out if args.runs == 1 else out / f"seed_{scenario.seed}"
        try:
            report = execute_run(scenario, run_dir)
        except Exception as exc:  # record and move to the next seed
            print(f"run seed={scenario.seed} failed: {exc}", file=sys.stderr)
            failures += 1
            continue
        print(
            f"run seed={scenario.seed} out={run_dir}"
            f" throughput_tps={report.throughput_tps!r}"
            f" final_test_acc={report.final_test_acc!r}"
        )
    return 1 if failures else 0


def _cmd_sweep(args: argparse.Namespace) -> int:
    grid = parse_grid(Path(args.config).read_text())
    rows = run_sweep(grid, Path(args.out), workers=args.workers)
    ok = sum(1 for row in rows if row["status"] == "ok")
    print(f"sweep complete: {ok}/{len(rows)} runs ok;"
          f" index at {Path(args.out) / 'index.csv'}")
    return 0 if ok == len(rows) else 1


def _cmd_analyze(args: argparse.Namespace) -> int:
    target = Path(args.out)
    if (target / "config.json").exists():
        run_dirs = [target]
    else:
        run_dirs = sorted(p.parent for p in target.glob("*/config.json"))
    if not run_dirs:
        print(f"no run directories under {target}", file=sys.stderr)
        return 1
    drifted_runs = 0
    for run_dir in run_dirs:
        drifted = analyze_run(run_dir)
        if drifted:
            drifted_runs += 1
            print(f"{run_dir}: DRIFT in {', '.join(drifted)}")
        else:
            print(f"{run_dir}: ok")
    return 1 if drifted_runs else 0


def _cmd_oracle(args: argparse.Namespace) -> int:
    config = _load_config(args.config, args.seed)
    outcome = run_oracle(config, rounds=args.rounds)
    text = json.dumps(outcome, indent=2) + "\n"
    print(text, end="")
    if args.out is not None:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "oracle.json").write_text(text)
    return 0 if outcome["models_match"] else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="chainfl",
        description="Discrete-event simulator of blockchain-coordinated federated learning.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="simulate one scenario and write its artifacts")
    run_p.add_argument("--config", help="YAML scenario file; defaults apply when omitted")
    run_p.add_argument("--seed", type=int, help="override the scenario seed")
    run_p.add_argument("--out", default="out/run", help="output directory")
    run_p.add_argument("--runs", type=int, default=1,
                       help="number of consecutive seeds to run, starting at the scenario seed")
    run_p.add_argument("--degenerate", action="store_true",
                       help="rewire the scenario for exact FedAvg equivalence")
    run_p.set_defaults(func=_cmd_run)

    sweep_p = sub.add_parser("sweep", help="run a parameter grid across seeds")
    sweep_p.add_argument("--config", required=True, help="YAML grid file (grid/seeds/base)")
    sweep_p.add_argument("--out", default="out/sweep", help="output directory")
    sweep_p.add_argument("--workers", type=int, default=1,
                         help="worker processes for independent runs")
    sweep_p.set_defaults(func=_cmd_sweep)

    analyze_p = sub.add_parser(
        "analyze", help="re-simulate stored runs and check artifacts byte-for-byte")
    analyze_p.add_argument("--out", required=True,
                           help="a run directory, or a sweep directory of runs")
    analyze_p.set_defaults(func=_cmd_analyze)

    oracle_p = sub.add_parser(
        "oracle", help="compare a degenerate run against reference FedAvg")
    oracle_p.add_argument("--config", help="YAML scenario file; defaults apply when omitted")
    oracle_p.add_argument("--seed", type=int, help="override the scenario seed")
    oracle_p.add_argument("--rounds", type=int, default=None,
                          help="aggregation rounds to compare (default: the scenario stop depth)")
    oracle_p.add_argument("--out", help="also write oracle.json into this directory")
    oracle_p.set_defaults(func=_cmd_oracle)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
