"""Run orchestration: artifact files for single runs, sweeps, and replay checks.

Every run directory holds five files: config.json (the fully resolved
scenario, seed included), trace.txt (the event trace), blocks.csv (one row
per mined block), summary.json (the run-level scalars), and shards.csv (the
per-client data assignment). A sweep adds a grid-level index.csv joining the
swept parameters with each run's summary scalars, one row per (config, seed)
whether the run succeeded or not. Numbers are written with round-trip
precision so byte comparison across reruns is meaningful.
"""

from __future__ import annotations

import csv
import io
import json
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any

import numpy as np

from .config import GridSpec, ScenarioConfig, config_from_mapping
from .engine import format_trace
from .learning import evaluate_accuracy, reference_fedavg
from .metrics import BLOCKS_CSV_COLUMNS, SUMMARY_KEYS, RunReport, build_report
from .simulation import SimulationResult, simulate

RUN_FILES = ("config.json", "trace.txt", "blocks.csv", "summary.json", "shards.csv")
REPLAY_CHECKED_FILES = ("trace.txt", "blocks.csv", "summary.json")
INDEX_BASE_COLUMNS = ("run_id", "status", "seed", "config_hash")
INDEX_SCALAR_COLUMNS = tuple(k for k in SUMMARY_KEYS if k not in ("seed", "config_hash"))


def _cell(value: Any) -> str:
    """CSV cell text: round-trip floats, 1/0 booleans, empty for absent."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_config_json(config: ScenarioConfig) -> str:
    return json.dumps(asdict(config), indent=2, sort_keys=True) + "\n"


def render_summary_json(report: RunReport) -> str:
    return json.dumps(report.summary_dict(), indent=2) + "\n"


def render_blocks_csv(report: RunReport) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(BLOCKS_CSV_COLUMNS)
    for row in report.per_block:
        writer.writerow([_cell(getattr(row, column)) for column in BLOCKS_CSV_COLUMNS])
    return buffer.getvalue()


def render_shards_csv(result: SimulationResult) -> str:
    """Per-client shard sizes plus a label histogram (class counts for
    classification, quantile-bucket counts for regression)."""
    histograms = [result.task.shard_histogram(shard) for shard in result.shards]
    buckets = sorted({bucket for hist in histograms for bucket in hist})
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["client", "n_samples", *[f"class_{b}" for b in buckets]])
    for shard, hist in zip(result.shards, histograms):
        counts = [hist.get(bucket, 0) for bucket in buckets]
        writer.writerow([shard.client, shard.n_samples, *counts])
    return buffer.getvalue()


def execute_run(config: ScenarioConfig, run_dir: Path | str) -> RunReport:
    """Simulate one scenario and write all run artifacts into ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(render_config_json(config))
    result = simulate(config)
    report = build_report(result)
    (run_dir / "trace.txt").write_text(format_trace(result.trace))
    (run_dir / "blocks.csv").write_text(render_blocks_csv(report))
    (run_dir / "summary.json").write_text(render_summary_json(report))
    (run_dir / "shards.csv").write_text(render_shards_csv(result))
    return report


def analyze_run(run_dir: Path | str) -> list[str]:
    """Re-simulate from the stored config and list artifact files whose
    stored bytes no longer match the recomputation (empty list = clean)."""
    run_dir = Path(run_dir)
    stored = json.loads((run_dir / "config.json").read_text())
    config = config_from_mapping(stored)
    result = simulate(config)
    report = build_report(result)
    fresh = {
        "trace.txt": format_trace(result.trace),
        "blocks.csv": render_blocks_csv(report),
        "summary.json": render_summary_json(report),
    }
    drifted = []
    for name in REPLAY_CHECKED_FILES:
        path = run_dir / name
        if not path.exists() or path.read_text() != fresh[name]:
            drifted.append(name)
    return drifted


def _sweep_job(job: tuple[str, str, ScenarioConfig]) -> tuple[str, int, str, str, dict | None]:
    out_dir, run_id, config = job
    run_dir = Path(out_dir) / run_id
    try:
        report = execute_run(config, run_dir)
    except Exception:
        run_dir.mkdir(parents=True, exist_ok=True)
        (run_dir / "error.txt").write_text(traceback.format_exc())
        return run_id, config.seed, config.config_hash(), "failed", None
    return run_id, config.seed, config.config_hash(), "ok", report.summary_dict()


def run_sweep(grid: GridSpec, out_dir: Path | str, workers: int = 1) -> list[dict[str, Any]]:
    """Execute every (config, seed) of the grid, one run directory apiece,
    then write index.csv joining swept parameters with summary scalars.

    Failed runs keep their row (status "failed", empty scalar cells) and a
    traceback in the run directory; the sweep itself carries on. With
    ``workers > 1`` the runs are farmed out to a process pool; the index is
    written once, in enumeration order, after all runs finish.
    """
    if workers < 1:
        raise ValueError("workers must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs, points = [], []
    for i, (point, _seed, config) in enumerate(grid.combinations()):
        jobs.append((str(out_dir), f"run_{i:04d}", config))
        points.append(point)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_sweep_job, jobs))
    else:
        outcomes = [_sweep_job(job) for job in jobs]

    columns = list(INDEX_BASE_COLUMNS) + list(grid.axis_names) + list(INDEX_SCALAR_COLUMNS)
    rows = []
    for point, (run_id, seed, config_hash, status, summary) in zip(points, outcomes):
        row: dict[str, Any] = {
            "run_id": run_id, "status": status, "seed": seed, "config_hash": config_hash,
        }
        row.update({name: point[name] for name in grid.axis_names})
        for key in INDEX_SCALAR_COLUMNS:
            row[key] = None if summary is None else summary[key]
        rows.append(row)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row[column]) for column in columns])
    (out_dir / "index.csv").write_text(buffer.getvalue())
    return rows


def run_oracle(config: ScenarioConfig, rounds: int | None = None) -> dict[str, Any]:
    """FedAvg-equivalence check: run the scenario in degenerate wiring and
    replay the same rounds with the synchronous reference loop, comparing
    global models round-for-round."""
    if rounds is None:
        rounds = config.stop_depth
    if rounds < 1:
        raise ValueError("rounds must be >= 1")
    degenerate = replace(config.degenerate(), stop_depth=rounds)
    result = simulate(degenerate)
    trajectory = reference_fedavg(
        result.task, result.shards, degenerate.learning_rate, degenerate.epochs,
        degenerate.batch_size, rounds, degenerate.seed,
    )
    chain_models = [block.global_model for block in result.chain]
    paired = list(zip(chain_models, trajectory))
    max_diff = max(
        float(np.max(np.abs(sim.values - ref.values))) for sim, ref in paired
    )
    test_x, test_y = result.task.test_x, result.task.test_y
    return {
        "rounds": rounds,
        "chain_depth": len(chain_models) - 1,
        "rounds_compared": len(paired),
        "max_param_diff": max_diff,
        "models_match": len(paired) == rounds + 1 and max_diff <= 1e-9,
        "sim_final_test_acc": evaluate_accuracy(result.task, chain_models[-1], test_x, test_y),
        "reference_final_test_acc": evaluate_accuracy(result.task, trajectory[-1], test_x, test_y),
    }
