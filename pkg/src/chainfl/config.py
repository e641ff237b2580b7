"""Scenario configuration: schema, validation, hashing, sweep grids.

Configs are YAML mappings; every key has a default, unknown keys are rejected
with a suggestion, and invalid values name the offending field. The config
hash identifies a scenario independently of the seed, so sweeps can group
repeat runs.
"""

from __future__ import annotations

import difflib
import hashlib
import itertools
import json
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Iterator

import yaml

from .learning import TASK_KINDS


class ConfigError(ValueError):
    """A configuration document failed validation."""


@dataclass(frozen=True)
class ScenarioConfig:
    """One simulation scenario. Defaults are the canonical mid-grid point."""

    # Blockchain / network
    block_interval_s: float = 10.0
    max_txs_per_block: int = 10
    l_t_bits: float | None = 2_327_000.0  # None → derived from model size
    l_bh_bits: float = 20_000.0
    n_miners: int = 10
    miner_powers: tuple[float, ...] | None = None  # None → equal shares
    c_link_bps: float = 100e6
    c_client_bps: float | None = None  # None → same as c_link_bps
    attachment_policy: str = "uniform"

    # Learning
    task: str = "synthetic-logistic-blobs"
    n_features: int = 5
    n_total: int = 6400
    noniid_skew: float = 0.0
    n_clients: int = 50
    epochs: int = 5
    batch_size: int = 64
    learning_rate: float = 0.01
    compute_power_ips: float = 900e6
    instructions_per_sample_epoch: float = 900e3

    # Run control
    stop_depth: int = 200
    seed: int = 0
    drain_deadline_s: float | None = None  # None → propagation-aware default
    mining_start_s: float = 0.0
    client_idle_s: float = 0.0
    client_mode: str = "continuous"  # or "wait_fresh_head"
    client_pull_cost: str = "transaction"  # or "zero"
    mine_on_full_mempool: bool = False
    zero_delays: bool = False

    def __post_init__(self):
        positive = [
            "block_interval_s", "l_bh_bits", "c_link_bps", "compute_power_ips",
            "instructions_per_sample_epoch", "learning_rate",
        ]
        for name in positive:
            if not _as_float(getattr(self, name)) > 0:
                raise ConfigError(f"{name} must be > 0, got {getattr(self, name)}")
        at_least_one = [
            "max_txs_per_block", "n_miners", "n_clients", "epochs",
            "batch_size", "stop_depth", "n_features", "n_total",
        ]
        for name in at_least_one:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        for name in ("mining_start_s", "client_idle_s"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.l_t_bits is not None and not self.l_t_bits > 0:
            raise ConfigError(f"l_t_bits must be > 0 or null, got {self.l_t_bits}")
        if self.c_client_bps is not None and not self.c_client_bps > 0:
            raise ConfigError(f"c_client_bps must be > 0 or null, got {self.c_client_bps}")
        if self.drain_deadline_s is not None and not self.drain_deadline_s > 0:
            raise ConfigError(f"drain_deadline_s must be > 0 or null, got {self.drain_deadline_s}")
        if self.task not in TASK_KINDS:
            raise ConfigError(f"task must be one of {TASK_KINDS}, got {self.task!r}")
        if not 0.0 <= self.noniid_skew <= 1.0:
            raise ConfigError(f"noniid_skew must lie in [0, 1], got {self.noniid_skew}")
        if self.client_mode not in ("continuous", "wait_fresh_head"):
            raise ConfigError(f"client_mode must be continuous|wait_fresh_head, got {self.client_mode!r}")
        if self.client_pull_cost not in ("transaction", "zero"):
            raise ConfigError(f"client_pull_cost must be transaction|zero, got {self.client_pull_cost!r}")
        if self.attachment_policy not in ("uniform", "round-robin"):
            raise ConfigError(f"attachment_policy must be uniform|round-robin, got {self.attachment_policy!r}")
        if self.miner_powers is not None:
            object.__setattr__(self, "miner_powers", tuple(float(p) for p in self.miner_powers))
            if len(self.miner_powers) != self.n_miners:
                raise ConfigError(
                    f"miner_powers must list n_miners={self.n_miners} values,"
                    f" got {len(self.miner_powers)}"
                )
            if any(p <= 0 for p in self.miner_powers):
                raise ConfigError("miner_powers entries must be > 0")
        if self.n_total < self.n_clients:
            raise ConfigError(
                f"n_total={self.n_total} must cover n_clients={self.n_clients}"
            )
        if self.batch_size > self.n_total // self.n_clients:
            raise ConfigError(
                f"batch_size={self.batch_size} exceeds the smallest client shard"
                f" ({self.n_total // self.n_clients} samples)"
            )
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")

    # -- derived quantities --------------------------------------------------

    def powers(self) -> tuple[float, ...]:
        return self.miner_powers or tuple(1.0 for _ in range(self.n_miners))

    def client_capacity(self) -> float:
        return self.c_client_bps if self.c_client_bps is not None else self.c_link_bps

    def config_hash(self) -> str:
        """Stable hex digest of every field except the seed."""
        payload = asdict(self)
        payload.pop("seed")
        canonical = json.dumps(payload, sort_keys=True, default=repr)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]

    def degenerate(self) -> "ScenarioConfig":
        """The FedAvg-equivalence wiring: one miner, zero delays, one block
        per round of all clients, clients gated on fresh heads."""
        if self.n_total % self.n_clients != 0:
            raise ConfigError(
                "degenerate mode needs equal shards: n_total divisible by n_clients"
            )
        return replace(
            self,
            n_miners=1,
            miner_powers=None,
            zero_delays=True,
            max_txs_per_block=self.n_clients,
            client_mode="wait_fresh_head",
            client_pull_cost="zero",
            mine_on_full_mempool=True,
            mining_start_s=0.0,
            client_idle_s=0.0,
        )


_FIELD_NAMES = tuple(f.name for f in fields(ScenarioConfig))
_INT_FIELDS = {
    "max_txs_per_block", "n_miners", "n_clients", "epochs", "batch_size",
    "stop_depth", "n_features", "n_total", "seed",
}


def _as_float(value: Any) -> float:
    return float(value)


def _coerce(name: str, value: Any) -> Any:
    if value is None:
        return None
    if name in _INT_FIELDS:
        if isinstance(value, bool) or (isinstance(value, float) and not value.is_integer()):
            raise ConfigError(f"{name} must be an integer, got {value!r}")
        return int(value)
    if name == "miner_powers":
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"miner_powers must be a list, got {value!r}")
        return tuple(float(v) for v in value)
    if name in ("mine_on_full_mempool", "zero_delays"):
        if not isinstance(value, bool):
            raise ConfigError(f"{name} must be a boolean, got {value!r}")
        return value
    if name in ("task", "client_mode", "client_pull_cost", "attachment_policy"):
        if not isinstance(value, str):
            raise ConfigError(f"{name} must be a string, got {value!r}")
        return value
    try:
        return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{name} must be a number, got {value!r}") from None


def _check_keys(mapping: dict, context: str) -> None:
    for key in mapping:
        if key not in _FIELD_NAMES:
            suggestion = difflib.get_close_matches(str(key), _FIELD_NAMES, n=1)
            hint = f"; did you mean {suggestion[0]!r}?" if suggestion else ""
            raise ConfigError(f"unknown {context} key {key!r}{hint}")


def config_from_mapping(overrides: dict[str, Any]) -> ScenarioConfig:
    _check_keys(overrides, "config")
    coerced = {name: _coerce(name, value) for name, value in overrides.items()}
    return ScenarioConfig(**coerced)


def parse_config(text: str) -> ScenarioConfig:
    """Parse a YAML scenario document; empty text yields the defaults."""
    document = yaml.safe_load(text)
    if document is None:
        document = {}
    if not isinstance(document, dict):
        raise ConfigError("config document must be a mapping of option: value")
    return config_from_mapping(document)


@dataclass(frozen=True)
class GridSpec:
    """A sweep: per-parameter value lists × seeds, over a base config."""

    axes: dict[str, tuple[Any, ...]]
    seeds: tuple[int, ...]
    base: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("grid needs at least one seed")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be >= 0")
        _check_keys(self.axes, "grid axis")
        _check_keys(self.base, "grid base")
        if "seed" in self.axes or "seed" in self.base:
            raise ConfigError("seeds are listed under 'seeds', not as a grid axis")
        for key, values in self.axes.items():
            if not values:
                raise ConfigError(f"grid axis {key!r} has no values")

    @property
    def axis_names(self) -> tuple[str, ...]:
        return tuple(sorted(self.axes))

    def combinations(self) -> Iterator[tuple[dict[str, Any], int, ScenarioConfig]]:
        """Deterministic enumeration: sorted axis order, then seed order."""
        names = self.axis_names
        for values in itertools.product(*(self.axes[n] for n in names)):
            point = dict(zip(names, values))
            for seed in self.seeds:
                overrides = {**self.base, **point, "seed": seed}
                yield point, seed, config_from_mapping(overrides)

    def size(self) -> int:
        total = 1
        for values in self.axes.values():
            total *= len(values)
        return total * len(self.seeds)


def parse_grid(text: str) -> GridSpec:
    """Parse a YAML sweep document: ``grid`` axes, ``seeds``, optional ``base``."""
    document = yaml.safe_load(text)
    if not isinstance(document, dict):
        raise ConfigError("grid document must be a mapping")
    unknown = set(document) - {"grid", "seeds", "base"}
    if unknown:
        raise ConfigError(f"unknown grid document keys: {sorted(unknown)}")
    axes_raw = document.get("grid", {})
    if not isinstance(axes_raw, dict):
        raise ConfigError("'grid' must map parameter names to value lists")
    axes = {}
    for key, values in axes_raw.items():
        if not isinstance(values, (list, tuple)):
            raise ConfigError(f"grid axis {key!r} must be a list of values")
        axes[key] = tuple(values)
    seeds_raw = document.get("seeds", [0])
    if not isinstance(seeds_raw, (list, tuple)) or not all(
        isinstance(s, int) and not isinstance(s, bool) for s in seeds_raw
    ):
        raise ConfigError("'seeds' must be a list of integers")
    base = document.get("base", {})
    if not isinstance(base, dict):
        raise ConfigError("'base' must be a mapping of option: value")
    return GridSpec(axes=axes, seeds=tuple(seeds_raw), base=base)
