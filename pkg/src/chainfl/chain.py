"""Per-node ledger state: block tree, mempool, mining attempts, fork math.

Each miner owns one ChainView. All views see the same genesis; blocks arrive
with delays, so views may disagree about the head until propagation settles.
Consensus is longest-chain with first-arrival tie-breaks; forks are resolved
by reorganising onto the deeper branch and returning abandoned transactions
to the mempool.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .learning import ModelParams

GENESIS_ID = 0
GENESIS_MINER = -1


class ChainInvariantError(RuntimeError):
    """A structural chain invariant (depth, uniqueness) was violated."""


class MiningConflictError(RuntimeError):
    """A second mining attempt was started on the same head."""


@dataclass(frozen=True, slots=True)
class Transaction:
    """One client's local update offered for inclusion."""

    tx_id: int
    client: int
    params: ModelParams
    n_samples: int
    ts_generated: float
    parent_block: int

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("transaction must carry at least one sample")


@dataclass(frozen=True, slots=True)
class Block:
    """A mined block carrying the aggregated global model."""

    block_id: int
    parent: int | None
    depth: int
    miner: int
    ts_mined: float
    transactions: tuple[Transaction, ...]
    global_model: ModelParams
    total_samples: int

    @property
    def included_txs(self) -> tuple[int, ...]:
        return tuple(tx.tx_id for tx in self.transactions)

    @property
    def n_txs(self) -> int:
        return len(self.transactions)

    @property
    def is_empty(self) -> bool:
        return not self.transactions


def make_genesis(initial_model: ModelParams) -> Block:
    return Block(
        block_id=GENESIS_ID,
        parent=None,
        depth=0,
        miner=GENESIS_MINER,
        ts_mined=0.0,
        transactions=(),
        global_model=initial_model,
        total_samples=0,
    )


def mining_rate(power: float, total_power: float, block_interval: float) -> float:
    """Per-miner PoW success rate: power share times 1/BI."""
    if not 0 < power <= total_power:
        raise ValueError("need 0 < power <= total_power")
    if not block_interval > 0:
        raise ValueError("block interval must be > 0")
    return (power / total_power) / block_interval


def analytic_fork_probability(
    rates: Sequence[float], winner_block_prop: float, winner: int | None = None
) -> float:
    """Probability that someone mines a competitor while the winner's block
    propagates: 1 − Π_{i≠w} exp(−λ_i · T_bp).

    With ``winner=None`` the result is averaged over all possible winners,
    weighted by each miner's chance λ_w/Σλ of being the one who mined; for
    homogeneous rates this equals the single-winner value
    1 − exp(−λ(M−1)T_bp).
    """
    if not rates:
        raise ValueError("rates must be non-empty")
    if any(r < 0 for r in rates):
        raise ValueError("rates must be non-negative")
    if winner_block_prop < 0:
        raise ValueError("winner_block_prop must be >= 0")

    total = sum(rates)
    if total == 0:
        raise ValueError("at least one rate must be positive")

    def one_winner(w: int) -> float:
        others = sum(r for i, r in enumerate(rates) if i != w)
        return 1.0 - math.exp(-others * winner_block_prop)

    if winner is not None:
        if not 0 <= winner < len(rates):
            raise ValueError(f"winner index {winner} out of range")
        return one_winner(winner)
    # Clamp: the weights sum to 1 only up to rounding.
    return min(1.0, sum((r / total) * one_winner(w) for w, r in enumerate(rates)))


def fork_probability_closed_form(mu: float, n_miners: int, block_prop: float) -> float:
    """The homogeneous closed form 1 − exp(−μ(M−1)T_bp) for a given μ."""
    if n_miners < 1:
        raise ValueError("need at least one miner")
    return 1.0 - math.exp(-mu * (n_miners - 1) * block_prop)


class ChainView:
    """One node's ledger: block tree, head, mempool, mining bookkeeping."""

    def __init__(self, owner: int, genesis: Block):
        self.owner = owner
        self.blocks: dict[int, Block] = {genesis.block_id: genesis}
        self.head_id: int = genesis.block_id
        self.arrival_time: dict[int, float] = {genesis.block_id: 0.0}
        # Transactions this node has ever seen (directly or inside blocks).
        self.seen_txs: dict[int, Transaction] = {}
        self.tx_arrival: dict[int, int] = {}  # first-sighting order, for FIFO
        self._arrival_counter = 0
        self.mempool: set[int] = set()
        # Transactions included in ancestors of the current head.
        self.included: set[int] = set()
        # Blocks waiting for their parent, keyed by the missing parent id.
        self.pending_children: dict[int, list[Block]] = {}
        # Mining attempt: (target parent, token). Stale tokens are discarded.
        self.mining_attempt: tuple[int, int] | None = None
        self._mining_token = 0

    # -- heads and paths ---------------------------------------------------

    @property
    def head(self) -> Block:
        return self.blocks[self.head_id]

    def path_to_genesis(self, block_id: int) -> Iterable[Block]:
        block = self.blocks[block_id]
        while True:
            yield block
            if block.parent is None:
                return
            block = self.blocks[block.parent]

    def _is_ancestor(self, ancestor_id: int, descendant_id: int) -> bool:
        block = self.blocks[descendant_id]
        target_depth = self.blocks[ancestor_id].depth
        while block.depth > target_depth:
            block = self.blocks[block.parent]
        return block.block_id == ancestor_id

    # -- transactions ------------------------------------------------------

    def _note_tx(self, tx: Transaction) -> bool:
        """Record first sighting; returns False for duplicates."""
        if tx.tx_id in self.seen_txs:
            return False
        self.seen_txs[tx.tx_id] = tx
        self.tx_arrival[tx.tx_id] = self._arrival_counter
        self._arrival_counter += 1
        return True

    def add_transaction(self, tx: Transaction) -> bool:
        """Admit a delivered transaction to the mempool (duplicates ignored;
        transactions already included under the head stay out)."""
        if not self._note_tx(tx):
            return False
        if tx.tx_id not in self.included:
            self.mempool.add(tx.tx_id)
        return True

    def oldest_pending(self, max_txs: int) -> list[Transaction]:
        ids = heapq.nsmallest(max_txs, self.mempool, key=self.tx_arrival.__getitem__)
        return [self.seen_txs[i] for i in ids]

    # -- mining ------------------------------------------------------------

    def begin_mining_attempt(self) -> tuple[int, int]:
        """Bind a new attempt to the current head; returns (parent, token)."""
        if self.mining_attempt is not None and self.mining_attempt[0] == self.head_id:
            raise MiningConflictError(
                f"miner {self.owner} already mining on head {self.head_id}"
            )
        self._mining_token += 1
        self.mining_attempt = (self.head_id, self._mining_token)
        return self.mining_attempt

    def attempt_is_current(self, parent: int, token: int) -> bool:
        return self.mining_attempt == (parent, token)

    def finish_mining_attempt(self) -> None:
        self.mining_attempt = None

    def build_block(
        self,
        block_id: int,
        max_txs: int,
        at: float,
        aggregate_fn: Callable[[Sequence[tuple[ModelParams, int]]], tuple[ModelParams, int]],
    ) -> Block:
        """Assemble a block on the current head from the oldest mempool
        transactions; an empty mempool yields an empty block re-publishing
        the parent's model."""
        if max_txs < 1:
            raise ValueError("a block must admit at least one transaction")
        taken = self.oldest_pending(max_txs)
        parent = self.head
        if taken:
            model, total = aggregate_fn([(tx.params, tx.n_samples) for tx in taken])
        else:
            model, total = parent.global_model, 0
        for tx in taken:
            self.mempool.discard(tx.tx_id)
        return Block(
            block_id=block_id,
            parent=parent.block_id,
            depth=parent.depth + 1,
            miner=self.owner,
            ts_mined=at,
            transactions=tuple(taken),
            global_model=model,
            total_samples=total,
        )

    # -- block arrival and reorgs -------------------------------------------

    def on_block_arrival(self, block: Block, at: float) -> str:
        """Insert a block (buffering it if its parent is unknown), re-evaluate
        the head, and reconcile the mempool on chain switches."""
        if block.block_id in self.blocks:
            return "duplicate"
        if block.parent not in self.blocks:
            waiting = self.pending_children.setdefault(block.parent, [])
            if any(b.block_id == block.block_id for b in waiting):
                return "duplicate"
            waiting.append(block)
            return "buffered"

        old_head = self.head_id
        self._insert_cascade(block, at)
        if self.head_id == old_head:
            return "accepted_fork"
        if self._is_ancestor(old_head, self.head_id):
            return "accepted_extends_head"
        return "switched_chains"

    def _insert_cascade(self, block: Block, at: float) -> None:
        frontier = [block]
        while frontier:
            blk = frontier.pop(0)
            self._insert(blk, at)
            frontier.extend(self.pending_children.pop(blk.block_id, []))

    def _insert(self, block: Block, at: float) -> None:
        parent = self.blocks.get(block.parent)
        if parent is None:
            raise ChainInvariantError(f"insert of {block.block_id} with unknown parent")
        if block.depth != parent.depth + 1:
            raise ChainInvariantError(
                f"block {block.block_id} depth {block.depth} != parent depth+1"
            )
        self.blocks[block.block_id] = block
        self.arrival_time[block.block_id] = at
        for tx in block.transactions:
            self._note_tx(tx)
        # Strictly deeper blocks take the head; equal depth keeps the
        # first-arrived head.
        if block.depth > self.head.depth:
            self._reorg(self.head_id, block.block_id)
            self.head_id = block.block_id

    def _reorg(self, old_head: int, new_head: int) -> None:
        """Move the included/mempool bookkeeping from one head to another."""
        leaving: list[Block] = []
        joining: list[Block] = []
        a, b = self.blocks[old_head], self.blocks[new_head]
        while a.depth > b.depth:
            leaving.append(a)
            a = self.blocks[a.parent]
        while b.depth > a.depth:
            joining.append(b)
            b = self.blocks[b.parent]
        while a.block_id != b.block_id:
            leaving.append(a)
            joining.append(b)
            a, b = self.blocks[a.parent], self.blocks[b.parent]

        for blk in leaving:
            for tx in blk.transactions:
                self.included.discard(tx.tx_id)
        for blk in joining:
            for tx in blk.transactions:
                self.included.add(tx.tx_id)
                self.mempool.discard(tx.tx_id)
        # Abandoned-branch transactions return unless the new branch has them.
        for blk in leaving:
            for tx in blk.transactions:
                if tx.tx_id not in self.included:
                    self.mempool.add(tx.tx_id)


def main_chain(views: Sequence[ChainView]) -> list[Block]:
    """The agreed chain after drain: the deepest head adopted by a strict
    majority of views; otherwise the deepest chain anywhere, ties broken by
    earliest tip timestamp then lowest id. Returned genesis→tip."""
    if not views:
        raise ValueError("need at least one view")

    head_counts: dict[int, int] = {}
    for view in views:
        head_counts[view.head_id] = head_counts.get(view.head_id, 0) + 1
    majority = [h for h, c in head_counts.items() if 2 * c > len(views)]

    if majority:
        tip_id = majority[0]
        holder = next(v for v in views if tip_id in v.blocks)
    else:
        union: dict[int, Block] = {}
        owners: dict[int, ChainView] = {}
        for view in views:
            for block_id, block in view.blocks.items():
                union.setdefault(block_id, block)
                owners.setdefault(block_id, view)
        parents = {b.parent for b in union.values() if b.parent is not None}
        leaves = [b for b in union.values() if b.block_id not in parents]
        tip = min(leaves, key=lambda b: (-b.depth, b.ts_mined, b.block_id))
        tip_id, holder = tip.block_id, owners[tip.block_id]

    path = list(holder.path_to_genesis(tip_id))
    path.reverse()
    return path
