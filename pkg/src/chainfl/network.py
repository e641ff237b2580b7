"""P2P topology: miners, clients, link capacities, propagation delays.

Miners form a complete graph; every client is attached to exactly one miner.
Message sizes determine mean propagation delays; actual delays are drawn from
exponential distributions with those means, one independent draw per receiver.
All quantities are in SI base units (bits, bits/second, seconds).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

from .engine import Event, EventEngine, StreamRegistry

MINER = "miner"
CLIENT = "client"

BITS_PER_PARAM = 32  # float32 model parameters


@dataclass(frozen=True, slots=True)
class NodeId:
    index: int
    kind: str

    def __post_init__(self):
        if self.kind not in (MINER, CLIENT):
            raise ValueError(f"unknown node kind {self.kind!r}")
        if self.index < 0:
            raise ValueError("node index must be non-negative")


@dataclass(frozen=True, slots=True)
class LinkSpec:
    """One link class; capacity in bits/second."""

    capacity: float

    def __post_init__(self):
        if not self.capacity > 0.0:
            raise ValueError(f"link capacity must be > 0, got {self.capacity}")


@dataclass(frozen=True, slots=True)
class SizeModel:
    """Wire sizes in bits: transactions carry one serialized model."""

    tx_bits: float
    block_header_bits: float

    def __post_init__(self):
        if not self.tx_bits > 0.0:
            raise ValueError("transaction size must be > 0 bits")
        if not self.block_header_bits > 0.0:
            raise ValueError("block header size must be > 0 bits")

    @classmethod
    def for_model(cls, n_params: int, block_header_bits: float) -> "SizeModel":
        return cls(tx_bits=float(n_params) * BITS_PER_PARAM, block_header_bits=block_header_bits)


def transaction_prop_mean(sizes: SizeModel, link: LinkSpec) -> float:
    """Mean seconds to push one transaction (one model) through a link."""
    return sizes.tx_bits / link.capacity


def block_prop_mean(sizes: SizeModel, payload_models: int, link: LinkSpec) -> float:
    """Mean seconds to push a block carrying ``payload_models`` models.

    Mined blocks carry exactly one model (the aggregate); empty blocks carry
    none and cost only the header.
    """
    if payload_models < 0:
        raise ValueError("payload_models must be >= 0")
    return (sizes.block_header_bits + payload_models * sizes.tx_bits) / link.capacity


@dataclass
class Topology:
    """Complete miner graph plus client→miner attachment."""

    n_miners: int
    sizes: SizeModel
    miner_link: LinkSpec
    client_link: LinkSpec
    attachment: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.n_miners < 1:
            raise ValueError("need at least one miner")
        for client, miner in self.attachment.items():
            if not 0 <= miner < self.n_miners:
                raise ValueError(f"client {client} attached to unknown miner {miner}")

    @classmethod
    def build(
        cls,
        n_miners: int,
        n_clients: int,
        sizes: SizeModel,
        miner_link: LinkSpec,
        client_link: LinkSpec,
        attachment_policy: str,
        streams: StreamRegistry,
    ) -> "Topology":
        """Attach ``n_clients`` clients by policy: ``uniform`` or ``round-robin``."""
        if attachment_policy == "uniform":
            gen = streams.stream("attachment").generator
            attachment = {k: int(gen.integers(0, n_miners)) for k in range(n_clients)}
        elif attachment_policy == "round-robin":
            attachment = {k: k % n_miners for k in range(n_clients)}
        else:
            raise ValueError(f"unknown attachment policy {attachment_policy!r}")
        return cls(n_miners, sizes, miner_link, client_link, attachment)

    @property
    def miners(self) -> list[NodeId]:
        return [NodeId(m, MINER) for m in range(self.n_miners)]

    @property
    def clients(self) -> list[NodeId]:
        return [NodeId(k, CLIENT) for k in sorted(self.attachment)]

    def attached_miner(self, client: int) -> int:
        try:
            return self.attachment[client]
        except KeyError:
            raise ValueError(f"unknown client {client}") from None

    def tx_mean(self) -> float:
        return transaction_prop_mean(self.sizes, self.miner_link)

    def block_mean(self, payload_models: int) -> float:
        return block_prop_mean(self.sizes, payload_models, self.miner_link)

    def client_tx_mean(self) -> float:
        return transaction_prop_mean(self.sizes, self.client_link)

    def broadcast_to_miners(
        self,
        engine: EventEngine,
        streams: StreamRegistry,
        origin: int,
        mean: float,
        stream_prefix: str,
        kind: str,
        tag_base: str,
        payload: Any,
        fixed_delay: float | None = None,
    ) -> list[Event]:
        """Schedule one delivery per peer miner with independent exponential
        delays, or a uniform ``fixed_delay`` when one is given."""
        if not 0 <= origin < self.n_miners:
            raise ValueError(f"unknown origin miner {origin}")
        deliveries = []
        for dest in range(self.n_miners):
            if dest == origin:
                continue
            if fixed_delay is None:
                delay = streams.stream(f"{stream_prefix}/{origin}->{dest}").exponential(mean)
            else:
                delay = fixed_delay
            deliveries.append(
                engine.schedule_after(delay, kind, f"{tag_base}>m{dest}", (payload, dest))
            )
        return deliveries

    def upload_to_miner(
        self,
        engine: EventEngine,
        streams: StreamRegistry,
        client: int,
        kind: str,
        tag_base: str,
        payload: Any,
        fixed_delay: float | None = None,
    ) -> Event:
        """Schedule a client's transaction upload to its attached miner."""
        miner = self.attached_miner(client)
        if fixed_delay is None:
            delay = streams.stream(f"link/client/{client}").exponential(self.client_tx_mean())
        else:
            delay = fixed_delay
        return engine.schedule_after(delay, kind, f"{tag_base}>m{miner}", (payload, miner))
