"""Full scenario wiring: clients train and submit, miners mine and propagate.

One Simulation owns the event loop for one (config, seed) run:

* Clients loop asynchronously: pull the attached miner's head model, train
  for a deterministic duration, emit a transaction, upload it; the receiving
  miner relays it once to all other miners.
* Miners run exponential PoW races (or mempool-triggered mining in degenerate
  mode), build blocks from the oldest pending transactions with weighted
  aggregation, and broadcast them.
* When any miner's chain reaches the stop depth, the run drains: scheduled
  deliveries complete, but training completions, mining completions, and new
  broadcasts are discarded, capped by a drain deadline.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .chain import (
    Block,
    ChainView,
    Transaction,
    main_chain,
    make_genesis,
    mining_rate,
)
from .config import ScenarioConfig
from .engine import (
    BLOCK_DELIVERED,
    BLOCK_MINED,
    CLIENT_TRAINING_DONE,
    DRAIN_DEADLINE,
    TX_DELIVERED,
    TX_GENERATED,
    Event,
    EventEngine,
    StreamRegistry,
)
from .learning import (
    LearningTask,
    Shard,
    TrainingCostModel,
    aggregate,
    generate_task,
    local_update,
    training_duration,
)
from .network import LinkSpec, SizeModel, Topology


@dataclass
class ClientRuntime:
    """Mutable per-client loop state."""

    index: int
    shard: Shard
    duration: float
    busy: bool = False
    waiting_parent: int | None = None  # head already trained on (gated mode)


@dataclass
class SimulationResult:
    """Everything a run produced, for metrics and artifact writing."""

    config: ScenarioConfig
    task: LearningTask
    shards: list[Shard]
    topology: Topology
    rates: list[float]
    genesis: Block
    blocks: dict[int, Block]
    txs: dict[int, Transaction]
    views: list[ChainView]
    chain: list[Block]
    trace: list[Event]
    t_sim_total: float
    drain_deadline_hit: bool


class Simulation:
    def __init__(self, config: ScenarioConfig):
        self.cfg = config
        self.streams = StreamRegistry(config.seed)
        self.task, self.shards = generate_task(
            config.task,
            config.seed,
            config.n_clients,
            config.n_features,
            config.n_total,
            config.noniid_skew,
        )
        tx_bits = config.l_t_bits if config.l_t_bits is not None else self.task.dim * 32.0
        self.sizes = SizeModel(tx_bits=tx_bits, block_header_bits=config.l_bh_bits)
        self.topology = Topology.build(
            n_miners=config.n_miners,
            n_clients=config.n_clients,
            sizes=self.sizes,
            miner_link=LinkSpec(config.c_link_bps),
            client_link=LinkSpec(config.client_capacity()),
            attachment_policy=config.attachment_policy,
            streams=self.streams,
        )
        powers = config.powers()
        self.rates = [
            mining_rate(p, sum(powers), config.block_interval_s) for p in powers
        ]
        initial_model = self.task.init_model(self.streams.stream("model-init").generator)
        self.genesis = make_genesis(initial_model)
        self.views = [ChainView(m, self.genesis) for m in range(config.n_miners)]
        cost = TrainingCostModel(config.instructions_per_sample_epoch)
        self.clients = [
            ClientRuntime(
                index=k,
                shard=self.shards[k],
                duration=training_duration(
                    self.shards[k].n_samples, config.epochs, config.compute_power_ips, cost
                ),
            )
            for k in range(config.n_clients)
        ]
        self._clients_of_miner: dict[int, list[int]] = {m: [] for m in range(config.n_miners)}
        for k in range(config.n_clients):
            self._clients_of_miner[self.topology.attached_miner(k)].append(k)

        self.engine = EventEngine()
        self.blocks: dict[int, Block] = {self.genesis.block_id: self.genesis}
        self.txs: dict[int, Transaction] = {}
        self._relayed: set[int] = set()
        self._tx_ids = itertools.count(1)
        self._block_ids = itertools.count(1)
        self.draining = False
        self.drain_deadline_hit = False
        self.inflight_deliveries = 0
        self.drain_deadline_s = (
            config.drain_deadline_s
            if config.drain_deadline_s is not None
            else 10.0 * config.block_interval_s
            + 20.0 * self.topology.block_mean(1)
            + 5.0 * self.topology.client_tx_mean()
        )
        self._fixed_delay = 0.0 if config.zero_delays else None

    # -- top level -----------------------------------------------------------

    def run(self) -> SimulationResult:
        for k in range(self.cfg.n_clients):
            self._begin_client_cycle(k)
        if not self.cfg.mine_on_full_mempool:
            for m in range(self.cfg.n_miners):
                self._start_mining(m, extra_delay=self.cfg.mining_start_s)
        self.engine.run(self._dispatch, stop=self._stopped)
        return SimulationResult(
            config=self.cfg,
            task=self.task,
            shards=self.shards,
            topology=self.topology,
            rates=self.rates,
            genesis=self.genesis,
            blocks=self.blocks,
            txs=self.txs,
            views=self.views,
            chain=main_chain(self.views),
            trace=self.engine.trace,
            t_sim_total=self.engine.now,
            drain_deadline_hit=self.drain_deadline_hit,
        )

    def _stopped(self) -> bool:
        if self.drain_deadline_hit:
            return True
        return self.draining and self.inflight_deliveries == 0

    def _dispatch(self, event: Event) -> bool:
        if event.kind == CLIENT_TRAINING_DONE:
            return self._on_training_done(event)
        if event.kind == TX_GENERATED:
            return self._on_tx_generated(event)
        if event.kind == TX_DELIVERED:
            return self._on_tx_delivered(event)
        if event.kind == BLOCK_MINED:
            return self._on_block_mined(event)
        if event.kind == BLOCK_DELIVERED:
            return self._on_block_delivered(event)
        if event.kind == DRAIN_DEADLINE:
            return self._on_drain_deadline(event)
        raise RuntimeError(f"unhandled event kind {event.kind}")

    # -- client lifecycle ------------------------------------------------------

    def _begin_client_cycle(self, k: int) -> None:
        """Pull the attached miner's head now; train; finish after the pull
        latency plus the deterministic training duration."""
        client = self.clients[k]
        head = self.views[self.topology.attached_miner(k)].head
        if self.cfg.zero_delays or self.cfg.client_pull_cost == "zero":
            pull_delay = 0.0
        else:
            pull_delay = self.streams.stream(f"link/pull/{k}").exponential(
                self.topology.client_tx_mean()
            )
        client.busy = True
        client.waiting_parent = None
        done_at = self.engine.now + pull_delay + client.duration + self.cfg.client_idle_s
        self.engine.schedule(
            done_at, CLIENT_TRAINING_DONE, f"c{k}", (k, head.block_id, head.global_model)
        )

    def _on_training_done(self, event: Event) -> bool:
        if self.draining:
            return False
        k, parent_id, parent_model = event.payload
        client = self.clients[k]
        client.busy = False
        model = local_update(
            self.task,
            parent_model,
            client.shard,
            self.cfg.learning_rate,
            self.cfg.epochs,
            self.cfg.batch_size,
            self.streams.stream(f"training/{k}").generator,
        )
        tx = Transaction(
            tx_id=next(self._tx_ids),
            client=k,
            params=model,
            n_samples=client.shard.n_samples,
            ts_generated=self.engine.now,
            parent_block=parent_id,
        )
        self.engine.schedule(self.engine.now, TX_GENERATED, f"tx{tx.tx_id}@c{k}", tx)
        return True

    def _on_tx_generated(self, event: Event) -> bool:
        if self.draining:
            return False
        tx: Transaction = event.payload
        self.txs[tx.tx_id] = tx
        self.topology.upload_to_miner(
            self.engine, self.streams, tx.client, TX_DELIVERED, f"tx{tx.tx_id}", tx,
            fixed_delay=self._fixed_delay,
        )
        self.inflight_deliveries += 1
        if self.cfg.client_mode == "continuous":
            self._begin_client_cycle(tx.client)
        else:
            attached_head = self.views[self.topology.attached_miner(tx.client)].head_id
            if attached_head != tx.parent_block:
                self._begin_client_cycle(tx.client)  # head moved during training
            else:
                self.clients[tx.client].waiting_parent = tx.parent_block
        return True

    def _wake_waiting_clients(self, miner: int) -> None:
        if self.cfg.client_mode != "wait_fresh_head" or self.draining:
            return
        head_id = self.views[miner].head_id
        for k in self._clients_of_miner[miner]:
            client = self.clients[k]
            if not client.busy and client.waiting_parent is not None and client.waiting_parent != head_id:
                self._begin_client_cycle(k)

    # -- transaction propagation ----------------------------------------------

    def _on_tx_delivered(self, event: Event) -> bool:
        tx, dest = event.payload
        self.inflight_deliveries -= 1
        admitted = self.views[dest].add_transaction(tx)
        if tx.tx_id not in self._relayed:
            # First arrival (the client upload): relay once to all other miners.
            self._relayed.add(tx.tx_id)
            if not self.draining and self.cfg.n_miners > 1:
                deliveries = self.topology.broadcast_to_miners(
                    self.engine, self.streams, dest, self.topology.tx_mean(),
                    "link/tx", TX_DELIVERED, f"tx{tx.tx_id}", tx,
                    fixed_delay=self._fixed_delay,
                )
                self.inflight_deliveries += len(deliveries)
        if admitted and not self.draining:
            self._maybe_mine_on_full(dest)
        return True

    # -- mining -----------------------------------------------------------------

    def _start_mining(self, miner: int, extra_delay: float = 0.0) -> None:
        if self.cfg.mine_on_full_mempool:
            self._maybe_mine_on_full(miner)
            return
        view = self.views[miner]
        parent, token = view.begin_mining_attempt()
        delay = extra_delay + self.streams.stream(f"mining/{miner}").exponential(
            1.0 / self.rates[miner]
        )
        self.engine.schedule_after(delay, BLOCK_MINED, f"m{miner}", (miner, parent, token))

    def _maybe_mine_on_full(self, miner: int) -> None:
        view = self.views[miner]
        if len(view.mempool) < self.cfg.max_txs_per_block:
            return
        if view.mining_attempt is not None and view.mining_attempt[0] == view.head_id:
            return  # a build is already scheduled for this head
        parent, token = view.begin_mining_attempt()
        self.engine.schedule(
            self.engine.now, BLOCK_MINED, f"m{miner}", (miner, parent, token)
        )

    def _restart_mining_if_stale(self, miner: int) -> None:
        if self.cfg.mine_on_full_mempool:
            self._maybe_mine_on_full(miner)
            return
        view = self.views[miner]
        if view.mining_attempt is None or view.mining_attempt[0] != view.head_id:
            self._start_mining(miner)

    def _on_block_mined(self, event: Event) -> bool:
        if self.draining:
            return False
        miner, parent, token = event.payload
        view = self.views[miner]
        if not view.attempt_is_current(parent, token):
            return False  # stale attempt: the head moved while mining
        view.finish_mining_attempt()
        block = view.build_block(
            next(self._block_ids), self.cfg.max_txs_per_block, self.engine.now, aggregate
        )
        self.blocks[block.block_id] = block
        view.on_block_arrival(block, self.engine.now)
        if self.cfg.n_miners > 1:
            deliveries = self.topology.broadcast_to_miners(
                self.engine, self.streams, miner,
                self.topology.block_mean(0 if block.is_empty else 1),
                "link/block", BLOCK_DELIVERED, f"b{block.block_id}", block,
                fixed_delay=self._fixed_delay,
            )
            self.inflight_deliveries += len(deliveries)
        if block.depth >= self.cfg.stop_depth:
            self._begin_drain()
        if not self.draining:
            self._start_mining(miner)
            self._wake_waiting_clients(miner)
        return True

    def _on_block_delivered(self, event: Event) -> bool:
        block, dest = event.payload
        self.inflight_deliveries -= 1
        view = self.views[dest]
        old_head = view.head_id
        view.on_block_arrival(block, self.engine.now)
        if view.head_id != old_head and not self.draining:
            self._restart_mining_if_stale(dest)
            self._wake_waiting_clients(dest)
        return True

    # -- drain -------------------------------------------------------------------

    def _begin_drain(self) -> None:
        self.draining = True
        self.engine.schedule_after(self.drain_deadline_s, DRAIN_DEADLINE, "-", None)

    def _on_drain_deadline(self, event: Event) -> bool:
        self.drain_deadline_hit = True
        return True


def simulate(config: ScenarioConfig) -> SimulationResult:
    """Build and run one scenario."""
    return Simulation(config).run()
