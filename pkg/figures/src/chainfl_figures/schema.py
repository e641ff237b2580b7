"""Column contracts for the simulator's CSV artifacts.

The simulator documents two schemas this package consumes: the sweep-level
index.csv (one row per run, joining swept parameters with summary scalars)
and the per-run blocks.csv (one row per mined block). Each figure declares
which index columns it needs beyond the common base; validation failures
name the missing columns and the offending file.
"""

from __future__ import annotations

import pandas as pd

INDEX_BASE_COLUMNS = ("run_id", "status", "seed", "config_hash")

BLOCKS_COLUMNS = (
    "block_id", "parent_id", "depth", "miner", "ts_mined", "n_txs",
    "total_samples", "on_main_chain", "staleness", "train_acc", "val_acc",
)

FIGURE_IDS = ("throughput", "accuracy_time", "fork_impact", "staleness")

# Index columns each figure needs on top of INDEX_BASE_COLUMNS. A sweep that
# did not vary (or re-export) these parameters cannot feed the figure.
FIGURE_INDEX_COLUMNS = {
    "throughput": ("block_interval_s", "max_txs_per_block", "throughput_tps"),
    "accuracy_time": ("block_interval_s", "n_clients", "c_link_bps"),
    "fork_impact": (
        "block_interval_s", "n_clients", "c_link_bps",
        "final_test_acc", "empirical_fork_rate",
    ),
    "staleness": ("block_interval_s",),
}

# Figures that read each selected run's blocks.csv, not just the index.
FIGURES_READING_BLOCKS = ("accuracy_time", "staleness")


class SchemaError(ValueError):
    """An input CSV does not match the documented schema."""


class SelectionError(ValueError):
    """A run filter is invalid or selects nothing."""


def require_columns(frame: pd.DataFrame, needed: tuple[str, ...], source: str) -> None:
    missing = [column for column in needed if column not in frame.columns]
    if missing:
        raise SchemaError(f"{source} is missing column(s): {', '.join(missing)}")
