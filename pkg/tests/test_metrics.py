"""Metric computations and the per-run report."""

import numpy as np
import pytest
from scipy import stats

from chainfl.chain import Block, Transaction, make_genesis
from chainfl.config import ScenarioConfig
from chainfl.learning import LearningTask, LogisticBlobsTask, ModelParams
from chainfl.metrics import (
    BLOCKS_CSV_COLUMNS,
    SUMMARY_KEYS,
    block_staleness,
    build_report,
    empirical_fork_rate,
    final_test_accuracy,
    per_block_accuracy,
    throughput,
)
from chainfl.simulation import simulate


def tx(tx_id, ts_generated, client=0, value=0.0, n_samples=1, parent=0):
    return Transaction(tx_id, client, ModelParams([value]), n_samples, ts_generated, parent)


def block(block_id, parent, depth, ts_mined, txs=(), model=None):
    txs = tuple(txs)
    model = model if model is not None else ModelParams([0.0])
    return Block(block_id, parent, depth, 0, ts_mined, txs,
                 model, sum(t.n_samples for t in txs))


def run_small(**overrides):
    defaults = dict(
        block_interval_s=1.0, max_txs_per_block=5, n_miners=3, n_clients=6,
        n_total=240, batch_size=10, stop_depth=15, c_link_bps=1e6,
        l_t_bits=145_000.0, task="synthetic-linear-regression", n_features=3,
        seed=3,
    )
    defaults.update(overrides)
    return simulate(ScenarioConfig(**defaults))


class TestThroughput:
    def test_two_hundred_full_blocks_over_2000_seconds(self):
        chain = [block(i, i - 1, i, 10.0 * i, [tx(10 * i + j, 5.0) for j in range(10)])
                 for i in range(1, 201)]
        assert throughput(chain, 2000.0) == pytest.approx(1.0)

    def test_empty_chain_has_zero_throughput(self):
        chain = [block(1, 0, 1, 5.0)]
        assert throughput(chain, 100.0) == 0.0

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            throughput([], 0.0)


class TestBlockStaleness:
    def test_mean_age_of_included_transactions(self):
        b = block(1, 0, 1, 100.0, [tx(1, 90.0), tx(2, 95.0)])
        assert block_staleness(b) == pytest.approx(7.5)

    def test_transaction_generated_at_mining_time_has_zero_staleness(self):
        b = block(1, 0, 1, 50.0, [tx(1, 50.0)])
        assert block_staleness(b) == 0.0

    def test_empty_block_staleness_is_absent_not_zero(self):
        assert block_staleness(block(1, 0, 1, 10.0)) is None


class TestEmpiricalForkRate:
    def test_fork_free_run_rates_zero(self):
        genesis = make_genesis(ModelParams([0.0]))
        blocks = {0: genesis}
        chain = [genesis]
        for i in range(1, 6):
            blocks[i] = block(i, i - 1, i, float(i))
            chain.append(blocks[i])
        assert empirical_fork_rate(blocks, chain) == 0.0

    def test_two_of_ten_blocks_off_chain(self):
        genesis = make_genesis(ModelParams([0.0]))
        blocks = {0: genesis}
        chain = [genesis]
        for i in range(1, 9):
            blocks[i] = block(i, i - 1, i, float(i))
            chain.append(blocks[i])
        blocks[9] = block(9, 3, 4, 4.5)   # two orphaned siblings
        blocks[10] = block(10, 5, 6, 6.5)
        assert empirical_fork_rate(blocks, chain) == pytest.approx(0.2)

    def test_requires_at_least_one_mined_block(self):
        genesis = make_genesis(ModelParams([0.0]))
        with pytest.raises(ValueError):
            empirical_fork_rate({0: genesis}, [genesis])


def separable_task():
    impl = LogisticBlobsTask(n_features=2, n_classes=2, center_scale=1.0)
    centers = np.array([[8.0, 0.0], [-8.0, 0.0]])
    gen = np.random.default_rng(0)
    x, y = impl.sample(gen, 60, centers)
    weights = np.vstack([2 * centers.T, -np.sum(centers**2, axis=1)])
    return LearningTask(impl, x, y, x, y, x, y), ModelParams(weights.ravel())


class TestAccuracyMetrics:
    def test_perfect_model_scores_one_on_contributor_shards(self):
        task, separator = separable_task()
        from chainfl.learning import Shard

        shard = Shard(0, task.train_x, task.train_y)
        b = Block(1, 0, 1, 0, 1.0, (tx(1, 0.5),), separator, 1)
        train, val = per_block_accuracy(b, task, [shard])
        assert train == 1.0
        assert val == 1.0

    def test_empty_block_has_no_accuracy_entry(self):
        task, _ = separable_task()
        assert per_block_accuracy(block(1, 0, 1, 1.0), task, []) is None

    def test_genesis_only_chain_scores_chance_level(self):
        result = run_small(task="synthetic-logistic-blobs", n_features=5,
                           n_total=600, batch_size=10, stop_depth=2)
        genesis_acc = final_test_accuracy([result.genesis], result.task)
        assert abs(genesis_acc - 0.1) < 0.12  # one seed, wide chance band

    def test_final_test_accuracy_uses_tip_model(self):
        result = run_small(stop_depth=5)
        tip = result.chain[-1]
        direct = final_test_accuracy(result.chain, result.task)
        from chainfl.learning import evaluate_accuracy

        assert direct == evaluate_accuracy(
            result.task, tip.global_model, result.task.test_x, result.task.test_y
        )

    def test_empty_chain_rejected(self):
        result = run_small(stop_depth=2)
        with pytest.raises(ValueError):
            final_test_accuracy([], result.task)


class TestRunReport:
    def test_summary_has_exact_keys(self):
        report = build_report(run_small(stop_depth=5))
        assert tuple(report.summary_dict()) == SUMMARY_KEYS

    def test_per_block_covers_every_mined_block(self):
        result = run_small(stop_depth=10)
        report = build_report(result)
        assert len(report.per_block) == len(result.blocks) - 1
        assert {row.block_id for row in report.per_block} == set(result.blocks) - {0}
        on_chain = {row.block_id for row in report.per_block if row.on_main_chain}
        assert on_chain == {b.block_id for b in result.chain if b.parent is not None}

    def test_reports_are_pure_functions_of_config_and_seed(self):
        first = build_report(run_small(stop_depth=8))
        second = build_report(run_small(stop_depth=8))
        assert first == second

    def test_throughput_respects_service_ceiling(self):
        result = run_small(stop_depth=20)
        report = build_report(result)
        ceiling = result.config.max_txs_per_block / result.config.block_interval_s
        assert report.throughput_tps <= ceiling * 1.1

    def test_staleness_nonnegative_everywhere(self):
        report = build_report(run_small(stop_depth=15))
        staleness = [row.staleness for row in report.per_block if row.staleness is not None]
        assert staleness and all(s >= 0 for s in staleness)

    def test_empty_rows_leave_accuracy_absent(self):
        result = run_small(n_clients=1, n_total=5000, batch_size=50,
                           block_interval_s=0.2, stop_depth=8, n_miners=2)
        report = build_report(result)
        empty_rows = [row for row in report.per_block if row.n_txs == 0]
        assert empty_rows
        assert all(row.staleness is None and row.train_acc is None for row in empty_rows)

    def test_fork_rate_zero_for_single_miner(self):
        result = run_small(n_miners=1, stop_depth=10)
        report = build_report(result)
        assert report.empirical_fork_rate == 0.0
        assert report.analytic_fork_prob_per_miner_mu == 0.0

    def test_csv_column_contract(self):
        assert BLOCKS_CSV_COLUMNS == (
            "block_id", "parent_id", "depth", "miner", "ts_mined", "n_txs",
            "total_samples", "on_main_chain", "staleness", "train_acc", "val_acc",
        )


class TestLearningTrends:
    def test_validation_accuracy_improves_along_stable_chains(self):
        # Later main-chain blocks beat earlier ones on average (Spearman > 0
        # pooled over seeds) in a low-fork, well-fed configuration.
        correlations = []
        for seed in range(10):
            result = simulate(ScenarioConfig(
                task="synthetic-logistic-blobs", n_features=4, n_total=400,
                n_clients=4, batch_size=20, epochs=2, learning_rate=0.2,
                n_miners=2, c_link_bps=100e6, l_t_bits=145_000.0,
                block_interval_s=2.0, max_txs_per_block=4, stop_depth=8,
                seed=seed,
            ))
            report = build_report(result)
            rows = [r for r in report.per_block if r.on_main_chain and r.val_acc is not None]
            depths = [r.depth for r in rows]
            accs = [r.val_acc for r in rows]
            rho = stats.spearmanr(depths, accs).statistic
            if not np.isnan(rho):
                correlations.append(rho)
        assert np.mean(correlations) > 0
