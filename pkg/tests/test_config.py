"""Configuration schema, validation diagnostics, hashing, and sweep grids."""

import pytest

from chainfl.config import (
    ConfigError,
    GridSpec,
    ScenarioConfig,
    config_from_mapping,
    parse_config,
    parse_grid,
)


class TestDefaults:
    def test_empty_document_yields_canonical_midpoint(self):
        cfg = parse_config("")
        assert cfg.block_interval_s == 10.0
        assert cfg.max_txs_per_block == 10
        assert cfg.n_miners == 10
        assert cfg.n_clients == 50
        assert cfg.epochs == 5
        assert cfg.batch_size == 64
        assert cfg.l_bh_bits == 20_000.0
        assert cfg.c_link_bps == 100e6
        assert cfg.stop_depth == 200
        assert cfg.compute_power_ips == 900e6
        assert cfg.seed == 0

    def test_yaml_overrides_apply(self):
        cfg = parse_config("block_interval_s: 1\nn_clients: 10\nseed: 9\n")
        assert cfg.block_interval_s == 1.0
        assert cfg.n_clients == 10
        assert cfg.seed == 9

    def test_document_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            parse_config("- 1\n- 2\n")

    def test_equal_power_default(self):
        assert parse_config("n_miners: 4").powers() == (1.0, 1.0, 1.0, 1.0)

    def test_client_capacity_falls_back_to_link(self):
        assert parse_config("c_link_bps: 5.0").client_capacity() == 5.0
        assert parse_config("c_client_bps: 2.0").client_capacity() == 2.0


class TestValidationDiagnostics:
    def test_negative_block_interval_names_the_field(self):
        with pytest.raises(ConfigError, match="block_interval_s"):
            parse_config("block_interval_s: -1")

    def test_unknown_key_suggests_the_real_one(self):
        with pytest.raises(ConfigError, match="blok_interval_s.*block_interval_s"):
            parse_config("blok_interval_s: 5")

    @pytest.mark.parametrize("field,value", [
        ("max_txs_per_block", 0),
        ("n_miners", 0),
        ("n_clients", 0),
        ("stop_depth", 0),
        ("learning_rate", 0.0),
        ("noniid_skew", 1.5),
        ("seed", -1),
        ("mining_start_s", -0.5),
    ])
    def test_out_of_range_values_name_their_field(self, field, value):
        with pytest.raises(ConfigError, match=field):
            config_from_mapping({field: value})

    def test_integer_fields_reject_fractions(self):
        with pytest.raises(ConfigError, match="batch_size"):
            config_from_mapping({"batch_size": 1.5})

    def test_boolean_fields_reject_strings(self):
        with pytest.raises(ConfigError, match="zero_delays"):
            config_from_mapping({"zero_delays": "yes please"})

    def test_miner_power_list_length_checked(self):
        with pytest.raises(ConfigError, match="miner_powers"):
            config_from_mapping({"n_miners": 3, "miner_powers": [1.0, 2.0]})

    def test_batch_cannot_exceed_smallest_shard(self):
        with pytest.raises(ConfigError, match="batch_size"):
            config_from_mapping({"n_total": 100, "n_clients": 10, "batch_size": 11})

    def test_unknown_task_rejected(self):
        with pytest.raises(ConfigError, match="task"):
            config_from_mapping({"task": "mnist"})


class TestConfigHash:
    def test_hash_ignores_seed(self):
        a = ScenarioConfig(seed=0)
        b = ScenarioConfig(seed=999)
        assert a.config_hash() == b.config_hash()

    def test_hash_distinguishes_scenarios(self):
        assert ScenarioConfig().config_hash() != ScenarioConfig(block_interval_s=1.0).config_hash()

    def test_hash_is_stable_across_processes(self):
        # Pinned digest: identical configs must hash identically anywhere.
        import subprocess
        import sys

        code = (
            "from chainfl.config import ScenarioConfig;"
            "print(ScenarioConfig().config_hash())"
        )
        fresh = subprocess.run(
            [sys.executable, "-c", code], capture_output=True, text=True, check=True
        ).stdout.strip()
        assert fresh == ScenarioConfig().config_hash()


class TestDegenerateWiring:
    def test_rewires_for_fedavg_equivalence(self):
        cfg = ScenarioConfig(n_clients=4, n_total=400, batch_size=25).degenerate()
        assert cfg.n_miners == 1
        assert cfg.zero_delays is True
        assert cfg.max_txs_per_block == 4
        assert cfg.client_mode == "wait_fresh_head"
        assert cfg.client_pull_cost == "zero"
        assert cfg.mine_on_full_mempool is True

    def test_requires_equal_shards(self):
        with pytest.raises(ConfigError, match="divisible"):
            ScenarioConfig(n_clients=7, n_total=100, batch_size=10).degenerate()


class TestGridSpec:
    def test_size_counts_cartesian_product_times_seeds(self):
        grid = GridSpec(
            axes={"block_interval_s": (1.0, 10.0, 60.0), "c_link_bps": (1e6, 100e6)},
            seeds=(0, 1, 2, 3, 4),
        )
        assert grid.size() == 30

    def test_combinations_sorted_axes_then_seeds(self):
        grid = GridSpec(
            axes={"n_clients": (2, 3), "block_interval_s": (1.0,)},
            seeds=(7, 8),
            base={"n_total": 60, "batch_size": 10},
        )
        combos = list(grid.combinations())
        assert grid.axis_names == ("block_interval_s", "n_clients")
        assert [(p["n_clients"], s) for p, s, _ in combos] == [
            (2, 7), (2, 8), (3, 7), (3, 8),
        ]
        assert all(c.n_total == 60 for _, _, c in combos)
        assert [c.seed for _, _, c in combos] == [7, 8, 7, 8]

    def test_rejects_seed_axis(self):
        with pytest.raises(ConfigError, match="seed"):
            GridSpec(axes={"seed": (1, 2)}, seeds=(0,))

    def test_rejects_unknown_axis(self):
        with pytest.raises(ConfigError, match="blok_interval_s"):
            GridSpec(axes={"blok_interval_s": (1.0,)}, seeds=(0,))

    def test_rejects_empty_axis_or_seeds(self):
        with pytest.raises(ConfigError, match="n_clients"):
            GridSpec(axes={"n_clients": ()}, seeds=(0,))
        with pytest.raises(ConfigError, match="seed"):
            GridSpec(axes={}, seeds=())


class TestParseGrid:
    def test_round_trip(self):
        grid = parse_grid(
            "grid:\n"
            "  block_interval_s: [1, 10]\n"
            "seeds: [0, 1, 2]\n"
            "base:\n"
            "  n_clients: 4\n"
        )
        assert grid.axes == {"block_interval_s": (1, 10)}
        assert grid.seeds == (0, 1, 2)
        assert grid.base == {"n_clients": 4}
        assert grid.size() == 6

    def test_unknown_top_level_key(self):
        with pytest.raises(ConfigError, match="sweep"):
            parse_grid("sweep: {}\nseeds: [0]\n")

    def test_seeds_must_be_integers(self):
        with pytest.raises(ConfigError, match="seeds"):
            parse_grid("grid: {n_clients: [2]}\nseeds: [0.5]\n")

    def test_axis_values_must_be_lists(self):
        with pytest.raises(ConfigError, match="n_clients"):
            parse_grid("grid: {n_clients: 2}\nseeds: [0]\n")
