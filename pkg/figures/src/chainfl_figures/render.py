"""The four figure styles. Every renderer builds its companion data table
first and draws exclusively from it, so each plotted number is present in
the table by construction. Output is deterministic: fixed orderings, a fixed
SVG hash salt, and no timestamp metadata.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)
import pandas as pd  # noqa: E402

from .data import load_blocks, load_index, main_chain_blocks, select_runs  # noqa: E402
from .schema import (  # noqa: E402
    FIGURE_IDS,
    FIGURE_INDEX_COLUMNS,
    SelectionError,
    require_columns,
)

plt.rcParams["svg.hashsalt"] = "chainfl-figures"


@dataclass(frozen=True)
class FigureSpec:
    """One figure request: which style, which sweep, which runs, where to."""

    figure_id: str
    index_path: Path | str
    out_path: Path | str
    filter_expr: str | None = None

    def __post_init__(self):
        if self.figure_id not in FIGURE_IDS:
            raise ValueError(
                f"unknown figure id {self.figure_id!r}; choose from {FIGURE_IDS}"
            )


def _throughput(runs: pd.DataFrame, index_path: Path | str):
    """Grouped bars: mean throughput per (block interval, block capacity)."""
    table = (
        runs.groupby(["block_interval_s", "max_txs_per_block"], sort=True)
        .agg(mean_throughput_tps=("throughput_tps", "mean"), n_runs=("run_id", "count"))
        .reset_index()
    )
    intervals = sorted(table["block_interval_s"].unique())
    capacities = sorted(table["max_txs_per_block"].unique())
    position = {bi: i for i, bi in enumerate(intervals)}
    width = 0.8 / len(capacities)
    offset = {n: (j - (len(capacities) - 1) / 2) * width for j, n in enumerate(capacities)}
    color = {n: f"C{j}" for j, n in enumerate(capacities)}

    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    seen = set()
    for row in table.itertuples():
        n_t = row.max_txs_per_block
        ax.bar(
            position[row.block_interval_s] + offset[n_t], row.mean_throughput_tps,
            width=width, color=color[n_t],
            label=None if n_t in seen else f"$N_t$={n_t}",
        )
        seen.add(n_t)
    ax.set_yscale("log")
    ax.set_xticks(list(position.values()))
    ax.set_xticklabels([f"BI={bi:g}s" for bi in intervals])
    ax.set_ylabel("mean main-chain throughput (tx/s)")
    ax.legend(title="block capacity")
    fig.tight_layout()
    return fig, table


def _accuracy_time(runs: pd.DataFrame, index_path: Path | str):
    """Train/validation accuracy against simulated time, one line per run,
    colored by the (block interval, clients, link) scenario."""
    parts = []
    for row in runs.itertuples():
        blocks = main_chain_blocks(load_blocks(index_path, row.run_id))
        blocks = blocks.dropna(subset=["val_acc"])
        if blocks.empty:
            continue
        part = blocks[["ts_mined", "train_acc", "val_acc"]].copy()
        part.insert(0, "run_id", row.run_id)
        part.insert(1, "block_interval_s", row.block_interval_s)
        part.insert(2, "n_clients", row.n_clients)
        part.insert(3, "c_link_bps", row.c_link_bps)
        parts.append(part)
    if not parts:
        raise SelectionError("no selected run has accuracy entries on its main chain")
    table = pd.concat(parts, ignore_index=True)

    scenarios = sorted(
        table[["block_interval_s", "n_clients", "c_link_bps"]]
        .drop_duplicates().itertuples(index=False, name=None)
    )
    color = {key: f"C{i}" for i, key in enumerate(scenarios)}
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    labeled = set()
    for run_id, run_rows in table.groupby("run_id", sort=True):
        key = (
            run_rows["block_interval_s"].iloc[0],
            run_rows["n_clients"].iloc[0],
            run_rows["c_link_bps"].iloc[0],
        )
        label = None
        if key not in labeled:
            label = f"BI={key[0]:g}s K={key[1]:g} C={key[2]:g}bps"
            labeled.add(key)
        ax.plot(run_rows["ts_mined"], run_rows["val_acc"],
                color=color[key], label=label)
        ax.plot(run_rows["ts_mined"], run_rows["train_acc"],
                color=color[key], linestyle="--", alpha=0.5)
    ax.set_xlabel("simulated time (s)")
    ax.set_ylabel("accuracy (solid: validation, dashed: train)")
    ax.legend(fontsize="small")
    fig.tight_layout()
    return fig, table


def _fork_impact(runs: pd.DataFrame, index_path: Path | str):
    """Per-seed paired test-accuracy differences (slow minus fast link) as
    one box per (block interval, clients), with the slow link's mean fork
    rate as a dashed overlay on a second axis."""
    capacities = sorted(runs["c_link_bps"].unique())
    if len(capacities) != 2:
        raise SelectionError(
            "fork_impact pairs runs across exactly two link capacities;"
            f" the selection has {capacities}"
        )
    slow, fast = capacities
    keys = ["block_interval_s", "n_clients", "seed"]
    slow_runs = runs[runs["c_link_bps"] == slow][
        keys + ["final_test_acc", "empirical_fork_rate"]
    ].rename(columns={
        "final_test_acc": "final_test_acc_slow",
        "empirical_fork_rate": "fork_rate_slow",
    })
    fast_runs = runs[runs["c_link_bps"] == fast][keys + ["final_test_acc"]].rename(
        columns={"final_test_acc": "final_test_acc_fast"}
    )
    table = slow_runs.merge(fast_runs, on=keys, how="inner")
    if table.empty:
        raise SelectionError(
            "no (scenario, seed) pair appears at both link capacities"
        )
    table["accuracy_difference"] = (
        table["final_test_acc_slow"] - table["final_test_acc_fast"]
    )
    table["mean_fork_rate_slow"] = table.groupby(
        ["block_interval_s", "n_clients"]
    )["fork_rate_slow"].transform("mean")
    table = table.sort_values(keys).reset_index(drop=True)

    groups = sorted(
        table[["block_interval_s", "n_clients"]]
        .drop_duplicates().itertuples(index=False, name=None)
    )
    fig, ax = plt.subplots(figsize=(7.0, 4.5))
    box_data, fork_means = [], []
    for bi, k in groups:
        rows = table[(table["block_interval_s"] == bi) & (table["n_clients"] == k)]
        box_data.append(rows["accuracy_difference"].to_numpy())
        fork_means.append(rows["mean_fork_rate_slow"].iloc[0])
    positions = list(range(1, len(groups) + 1))
    ax.boxplot(box_data, positions=positions)
    ax.axhline(0.0, color="grey", linewidth=0.8)
    ax.set_xticks(positions)
    ax.set_xticklabels([f"BI={bi:g}s\nK={k:g}" for bi, k in groups])
    ax.set_ylabel(f"final test-acc difference (C={slow:g} − C={fast:g} bps)")
    twin = ax.twinx()
    for pos, fork in zip(positions, fork_means):
        twin.hlines(fork, pos - 0.35, pos + 0.35, linestyles="dashed", color="C3")
    twin.set_ylabel("mean fork rate at the slow link", color="C3")
    fig.tight_layout()
    return fig, table


def _staleness(runs: pd.DataFrame, index_path: Path | str):
    """Mean staleness and validation accuracy per main-chain block depth,
    pooled over the selected runs."""
    parts = []
    for row in runs.itertuples():
        blocks = main_chain_blocks(load_blocks(index_path, row.run_id))
        parts.append(blocks[["depth", "staleness", "val_acc"]])
    pooled = pd.concat(parts, ignore_index=True)
    pooled = pooled[pooled["depth"] > 0]
    if pooled.empty:
        raise SelectionError("selected runs have no main-chain blocks beyond genesis")
    table = (
        pooled.groupby("depth", sort=True)
        .agg(
            mean_staleness_s=("staleness", "mean"),
            mean_val_acc=("val_acc", "mean"),
            n_blocks=("depth", "count"),
        )
        .reset_index()
    )
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    stale = table.dropna(subset=["mean_staleness_s"])
    ax.plot(stale["depth"], stale["mean_staleness_s"], color="C0")
    ax.set_xlabel("main-chain block depth")
    ax.set_ylabel("mean staleness (s)", color="C0")
    twin = ax.twinx()
    acc = table.dropna(subset=["mean_val_acc"])
    twin.plot(acc["depth"], acc["mean_val_acc"], color="C1", linestyle="--")
    twin.set_ylabel("mean validation accuracy", color="C1")
    fig.tight_layout()
    return fig, table


_BUILDERS = {
    "throughput": _throughput,
    "accuracy_time": _accuracy_time,
    "fork_impact": _fork_impact,
    "staleness": _staleness,
}


def build_figure(spec: FigureSpec):
    """Load inputs, validate schemas, and build (figure, companion table)."""
    index = load_index(spec.index_path)
    require_columns(index, FIGURE_INDEX_COLUMNS[spec.figure_id], str(spec.index_path))
    runs = select_runs(index, spec.filter_expr)
    return _BUILDERS[spec.figure_id](runs, spec.index_path)


def render(spec: FigureSpec) -> tuple[Path, Path]:
    """Write the SVG image and its companion CSV; returns both paths."""
    fig, table = build_figure(spec)
    out = Path(spec.out_path)
    out.parent.mkdir(parents=True, exist_ok=True)
    try:
        fig.savefig(out, format="svg", metadata={"Date": None})
    finally:
        plt.close(fig)
    table_path = out.with_suffix(".csv")
    table.to_csv(table_path, index=False, lineterminator="\n")
    return out, table_path
