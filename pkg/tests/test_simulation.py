"""End-to-end simulation behavior: client loops, mining, drain, determinism."""

import numpy as np
import pytest

from chainfl.config import ScenarioConfig
from chainfl.engine import (
    BLOCK_DELIVERED,
    BLOCK_MINED,
    CLIENT_TRAINING_DONE,
    TX_DELIVERED,
    TX_GENERATED,
    StarvationError,
    format_trace,
)
from chainfl.learning import generate_task, reference_fedavg
from chainfl.simulation import Simulation, simulate


def small_config(**overrides):
    defaults = dict(
        block_interval_s=1.0,
        max_txs_per_block=5,
        n_miners=3,
        n_clients=6,
        n_total=240,
        batch_size=10,
        stop_depth=15,
        c_link_bps=1e6,
        l_t_bits=145_000.0,
        task="synthetic-linear-regression",
        n_features=3,
        seed=1,
    )
    defaults.update(overrides)
    return ScenarioConfig(**defaults)


class TestDeterminism:
    def test_same_config_and_seed_reproduce_traces_byte_for_byte(self):
        first = simulate(small_config())
        second = simulate(small_config())
        assert format_trace(first.trace) == format_trace(second.trace)
        assert [b.block_id for b in first.chain] == [b.block_id for b in second.chain]

    def test_different_seeds_diverge(self):
        first = simulate(small_config(seed=1))
        second = simulate(small_config(seed=2))
        assert format_trace(first.trace) != format_trace(second.trace)


class TestClientLifecycle:
    def test_single_client_trace_timeline(self):
        # 1000 samples, E=5, 900 MIPS, 900k instr/sample-epoch → exactly 5 s
        # of training; free pull; fast upload link.
        cfg = small_config(
            n_miners=1, n_clients=1, n_total=1000, batch_size=50,
            client_pull_cost="zero", c_client_bps=1e9, stop_depth=2,
            block_interval_s=10.0,
        )
        result = simulate(cfg)
        done = [ev for ev in result.trace if ev.kind == CLIENT_TRAINING_DONE]
        generated = [ev for ev in result.trace if ev.kind == TX_GENERATED]
        delivered = [ev for ev in result.trace if ev.kind == TX_DELIVERED]
        assert done[0].fire_at == pytest.approx(5.0)
        assert generated[0].fire_at == pytest.approx(5.0)
        assert result.txs[1].ts_generated == pytest.approx(5.0)
        assert 0 < delivered[0].fire_at - generated[0].fire_at < 0.01

    def test_two_clients_one_miner_block_holds_both_txs_once(self):
        cfg = small_config(
            n_miners=1, n_clients=2, n_total=100, batch_size=10,
            attachment_policy="round-robin", mine_on_full_mempool=True,
            max_txs_per_block=2, stop_depth=1,
        )
        result = simulate(cfg)
        first_block = result.chain[1]
        assert sorted(first_block.included_txs) == [1, 2]
        assert all(not view.mempool for view in result.views)

    def test_slow_client_produces_stale_lineage(self):
        # Blocks advance several depths during one long training run, so some
        # included transaction must descend from an old parent.
        cfg = small_config(
            n_miners=1, n_clients=3, n_total=3000, batch_size=50,
            block_interval_s=0.5, stop_depth=12, max_txs_per_block=2,
        )
        result = simulate(cfg)
        stale = [
            (block, tx)
            for block in result.chain[1:]
            for tx in block.transactions
            if result.blocks[tx.parent_block].depth < block.depth - 1
        ]
        assert stale, "expected at least one transaction trained from an old head"

    def test_gated_clients_never_retrain_on_same_head(self):
        cfg = small_config(client_mode="wait_fresh_head", stop_depth=10)
        result = simulate(cfg)
        lineages = [(tx.client, tx.parent_block) for tx in result.txs.values()]
        assert len(lineages) == len(set(lineages))

    def test_client_idle_time_delays_first_transaction(self):
        base = simulate(small_config(n_miners=1, n_clients=1, n_total=100,
                                     batch_size=10, stop_depth=1,
                                     mine_on_full_mempool=True, max_txs_per_block=1,
                                     client_pull_cost="zero"))
        idled = simulate(small_config(n_miners=1, n_clients=1, n_total=100,
                                      batch_size=10, stop_depth=1,
                                      mine_on_full_mempool=True, max_txs_per_block=1,
                                      client_pull_cost="zero", client_idle_s=2.5))
        assert idled.txs[1].ts_generated == pytest.approx(base.txs[1].ts_generated + 2.5)


class TestMining:
    def test_mining_start_delay_holds_blocks_back(self):
        cfg = small_config(mining_start_s=3.0, stop_depth=5)
        result = simulate(cfg)
        first_mined = min(ev.fire_at for ev in result.trace if ev.kind == BLOCK_MINED)
        assert first_mined >= 3.0

    def test_saturated_mempool_fills_blocks(self):
        # Production outruns service: every main-chain block after warm-up is full.
        cfg = small_config(mining_start_s=10.0, stop_depth=10)
        result = simulate(cfg)
        assert all(b.n_txs == cfg.max_txs_per_block for b in result.chain[1:])

    def test_empty_blocks_republish_parent_model(self):
        # Clients far slower than mining: most blocks are empty.
        cfg = small_config(
            n_clients=1, n_total=5000, batch_size=50, block_interval_s=0.2,
            stop_depth=10, n_miners=2,
        )
        result = simulate(cfg)
        empties = [b for b in result.chain[1:] if b.is_empty]
        assert empties
        for block in empties:
            parent = result.blocks[block.parent]
            np.testing.assert_array_equal(
                block.global_model.values, parent.global_model.values
            )

    def test_block_timestamps_are_mining_times(self):
        result = simulate(small_config())
        mined_times = {
            ev.tag: ev.fire_at for ev in result.trace if ev.kind == BLOCK_MINED
        }
        for block in result.blocks.values():
            if block.parent is None:
                continue
            assert block.ts_mined in set(mined_times.values()) or block.ts_mined >= 0


class TestDrainAndConvergence:
    def test_clean_drain_leaves_no_deliveries_queued(self):
        sim = Simulation(small_config())
        result = sim.run()
        assert not result.drain_deadline_hit
        leftover = set(sim.engine.pending_kinds())
        assert TX_DELIVERED not in leftover
        assert BLOCK_DELIVERED not in leftover
        assert sim.inflight_deliveries == 0

    def test_all_miners_converge_to_identical_trees(self):
        result = simulate(small_config(stop_depth=25))
        assert not result.drain_deadline_hit
        block_sets = [frozenset(v.blocks) for v in result.views]
        assert len(set(block_sets)) == 1
        max_depth = max(v.head.depth for v in result.views)
        assert all(v.head.depth == max_depth for v in result.views)

    def test_main_chain_reaches_stop_depth(self):
        result = simulate(small_config(stop_depth=15))
        assert result.chain[-1].depth >= 15
        for child, parent in zip(result.chain[1:], result.chain):
            assert child.parent == parent.block_id
            assert child.depth == parent.depth + 1

    def test_tiny_deadline_forces_hard_stop(self):
        cfg = small_config(drain_deadline_s=1e-9, stop_depth=5)
        result = simulate(cfg)
        assert result.drain_deadline_hit
        assert result.trace[-1].kind == "SimulationDrainDeadline"

    def test_no_transaction_repeats_on_main_chain(self):
        result = simulate(small_config(stop_depth=25))
        included = [tx for b in result.chain for tx in b.included_txs]
        assert len(included) == len(set(included))

    def test_starvation_reported_when_scenario_cannot_progress(self):
        # Gated clients plus a mempool threshold that can never be met.
        cfg = small_config(
            client_mode="wait_fresh_head", mine_on_full_mempool=True,
            max_txs_per_block=50, n_clients=6,
        )
        with pytest.raises(StarvationError):
            simulate(cfg)


class TestDegenerateEquivalence:
    def test_chain_models_match_reference_fedavg(self):
        cfg = ScenarioConfig(
            task="synthetic-logistic-blobs", n_features=4, n_total=400,
            n_clients=4, batch_size=25, epochs=2, learning_rate=0.1,
            stop_depth=3, seed=42,
        ).degenerate()
        result = simulate(cfg)
        task, shards = generate_task(
            cfg.task, cfg.seed, cfg.n_clients, cfg.n_features, cfg.n_total, cfg.noniid_skew
        )
        trajectory = reference_fedavg(
            task, shards, cfg.learning_rate, cfg.epochs, cfg.batch_size,
            rounds=3, seed=cfg.seed,
        )
        assert len(result.chain) == 4  # genesis + 3 rounds
        for round_index, block in enumerate(result.chain):
            reference = trajectory[round_index].values
            simulated = block.global_model.values
            np.testing.assert_allclose(simulated, reference, rtol=1e-9, atol=1e-12)

    def test_each_round_is_one_full_block(self):
        cfg = ScenarioConfig(
            task="synthetic-linear-regression", n_features=3, n_total=120,
            n_clients=6, batch_size=10, epochs=1, stop_depth=4, seed=7,
        ).degenerate()
        result = simulate(cfg)
        assert [b.n_txs for b in result.chain[1:]] == [6, 6, 6, 6]
        # every client contributes exactly once per round
        for block in result.chain[1:]:
            assert sorted(tx.client for tx in block.transactions) == list(range(6))

    def test_round_times_stack_deterministically(self):
        cfg = ScenarioConfig(
            task="synthetic-linear-regression", n_features=3, n_total=120,
            n_clients=6, batch_size=10, epochs=1, stop_depth=3, seed=7,
        ).degenerate()
        result = simulate(cfg)
        duration = result.t_sim_total / 3
        expected = [duration * r for r in (1, 2, 3)]
        actual = [b.ts_mined for b in result.chain[1:]]
        assert actual == pytest.approx(expected)
