"""Run metrics: throughput, staleness, fork statistics, model accuracy.

Everything here is pure post-processing of a finished SimulationResult; the
same inputs always produce the same report.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .chain import Block, analytic_fork_probability, fork_probability_closed_form
from .learning import LearningTask, Shard, evaluate_accuracy
from .simulation import SimulationResult

BLOCKS_CSV_COLUMNS = (
    "block_id",
    "parent_id",
    "depth",
    "miner",
    "ts_mined",
    "n_txs",
    "total_samples",
    "on_main_chain",
    "staleness",
    "train_acc",
    "val_acc",
)

SUMMARY_KEYS = (
    "throughput_tps",
    "empirical_fork_rate",
    "analytic_fork_prob_per_miner_mu",
    "analytic_fork_prob_aggregate_mu",
    "final_test_acc",
    "t_sim_total",
    "seed",
    "config_hash",
)


@dataclass(frozen=True)
class BlockRow:
    """One blocks.csv row; staleness/accuracy are absent for empty blocks."""

    block_id: int
    parent_id: int
    depth: int
    miner: int
    ts_mined: float
    n_txs: int
    total_samples: int
    on_main_chain: bool
    staleness: float | None
    train_acc: float | None
    val_acc: float | None


@dataclass(frozen=True)
class RunReport:
    throughput_tps: float
    empirical_fork_rate: float
    analytic_fork_prob_per_miner_mu: float
    analytic_fork_prob_aggregate_mu: float
    final_test_acc: float
    t_sim_total: float
    seed: int
    config_hash: str
    per_block: tuple[BlockRow, ...]

    def summary_dict(self) -> dict:
        return {key: getattr(self, key) for key in SUMMARY_KEYS}


def throughput(chain: Sequence[Block], total_time: float) -> float:
    """Main-chain transactions per second of simulated time."""
    if not total_time > 0:
        raise ValueError("total_time must be > 0")
    return sum(block.n_txs for block in chain) / total_time


def block_staleness(block: Block) -> float | None:
    """Mean age of the block's transactions at mining time; None if empty."""
    if block.is_empty:
        return None
    ages = [block.ts_mined - tx.ts_generated for tx in block.transactions]
    return float(np.mean(ages))


def empirical_fork_rate(blocks: dict[int, Block], chain: Sequence[Block]) -> float:
    """Fraction of mined blocks that ended up off the main chain."""
    mined = sum(1 for b in blocks.values() if b.parent is not None)
    if mined < 1:
        raise ValueError("need at least one mined block")
    on_chain = sum(1 for b in chain if b.parent is not None)
    return (mined - on_chain) / mined


def per_block_accuracy(
    block: Block, task: LearningTask, shards: Sequence[Shard]
) -> tuple[float, float] | None:
    """(train, validation) accuracy of the block's model; None if empty.

    Training accuracy is measured on the union of the contributing clients'
    shards; validation accuracy on the shared validation split.
    """
    if block.is_empty:
        return None
    contributors = sorted({tx.client for tx in block.transactions})
    train_x = np.vstack([shards[k].x for k in contributors])
    train_y = np.concatenate([shards[k].y for k in contributors])
    train = evaluate_accuracy(task, block.global_model, train_x, train_y)
    val = evaluate_accuracy(task, block.global_model, task.val_x, task.val_y)
    return train, val


def final_test_accuracy(chain: Sequence[Block], task: LearningTask) -> float:
    """Test accuracy of the model in the chain tip."""
    if not chain:
        raise ValueError("main chain must be non-empty")
    return evaluate_accuracy(task, chain[-1].global_model, task.test_x, task.test_y)


def build_report(result: SimulationResult) -> RunReport:
    chain_ids = {block.block_id for block in result.chain}
    rows = []
    for block_id in sorted(result.blocks):
        block = result.blocks[block_id]
        if block.parent is None:
            continue  # genesis is not a mined block
        accuracy = per_block_accuracy(block, result.task, result.shards)
        rows.append(
            BlockRow(
                block_id=block.block_id,
                parent_id=block.parent,
                depth=block.depth,
                miner=block.miner,
                ts_mined=block.ts_mined,
                n_txs=block.n_txs,
                total_samples=block.total_samples,
                on_main_chain=block.block_id in chain_ids,
                staleness=block_staleness(block),
                train_acc=accuracy[0] if accuracy else None,
                val_acc=accuracy[1] if accuracy else None,
            )
        )

    cfg = result.config
    block_prop = result.topology.block_mean(1)
    return RunReport(
        throughput_tps=throughput(result.chain, result.t_sim_total),
        empirical_fork_rate=empirical_fork_rate(result.blocks, result.chain),
        analytic_fork_prob_per_miner_mu=analytic_fork_probability(result.rates, block_prop),
        analytic_fork_prob_aggregate_mu=fork_probability_closed_form(
            1.0 / cfg.block_interval_s, cfg.n_miners, block_prop
        ),
        final_test_acc=final_test_accuracy(result.chain, result.task),
        t_sim_total=result.t_sim_total,
        seed=cfg.seed,
        config_hash=cfg.config_hash(),
        per_block=tuple(rows),
    )
