"""Deterministic discrete-event core: clock, event queue, named RNG streams.

Events are totally ordered by (fire_at, seq) where seq is a global creation
counter, so simultaneous events fire in scheduling (FIFO) order and replays of
the same configuration produce byte-identical traces.
"""

from __future__ import annotations

import hashlib
import heapq
import math
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable

import numpy as np

# Event kinds, as they appear in trace output.
TX_GENERATED = "TxGenerated"
TX_DELIVERED = "TxDelivered"
BLOCK_MINED = "BlockMined"
BLOCK_DELIVERED = "BlockDelivered"
CLIENT_TRAINING_DONE = "ClientTrainingDone"
DRAIN_DEADLINE = "SimulationDrainDeadline"

EVENT_KINDS = (
    TX_GENERATED,
    TX_DELIVERED,
    BLOCK_MINED,
    BLOCK_DELIVERED,
    CLIENT_TRAINING_DONE,
    DRAIN_DEADLINE,
)


class CausalityError(RuntimeError):
    """Raised when an event is scheduled before the current simulation time."""


class StarvationError(RuntimeError):
    """Raised when the queue empties while a stop condition is still pending."""


@dataclass(frozen=True, slots=True)
class Event:
    """One scheduled occurrence.

    ``tag`` is a compact payload identifier used in trace lines; ``payload``
    carries the domain object(s) for the handler and never enters the trace.
    """

    fire_at: float
    seq: int
    kind: str
    tag: str
    payload: Any = None

    def __lt__(self, other: "Event") -> bool:
        return (self.fire_at, self.seq) < (other.fire_at, other.seq)

    def trace_line(self) -> str:
        return f"{self.fire_at!r}\t{self.seq}\t{self.kind}\t{self.tag}"


def _stream_seed_words(seed: int, label: str) -> list[int]:
    digest = hashlib.sha256(label.encode("utf-8")).digest()
    words = [int.from_bytes(digest[i : i + 4], "big") for i in range(0, 16, 4)]
    return [seed, *words]


class RngStream:
    """Independent, label-addressed random stream.

    Draws in one stream never depend on which other streams exist or how much
    they have been consumed: the stream seed mixes the root seed with a hash
    of the label only.
    """

    def __init__(self, seed: int, label: str):
        self.seed = seed
        self.label = label
        self.generator = np.random.Generator(
            np.random.PCG64(np.random.SeedSequence(_stream_seed_words(seed, label)))
        )

    def uniform(self) -> float:
        """One U[0, 1) draw."""
        return float(self.generator.random())

    def exponential(self, mean: float) -> float:
        """Exponential draw with the given mean, via the inverse CDF."""
        return sample_exponential(self, mean)


def sample_exponential(stream: RngStream, mean: float) -> float:
    """Inverse-CDF exponential sample: ``-mean * log(1 - U)``.

    Built on the uniform bit stream alone so identical seeds reproduce
    identical samples regardless of library-internal sampling algorithms.
    """
    if not (mean > 0.0) or not math.isfinite(mean):
        raise ValueError(f"exponential mean must be finite and > 0, got {mean}")
    return -mean * math.log1p(-stream.uniform())


class StreamRegistry:
    """Creates and caches named RNG streams for one root seed."""

    def __init__(self, seed: int):
        self.seed = seed
        self._streams: dict[str, RngStream] = {}

    def stream(self, label: str) -> RngStream:
        found = self._streams.get(label)
        if found is None:
            found = self._streams[label] = RngStream(self.seed, label)
        return found


@dataclass
class EventEngine:
    """Priority-queue simulation loop with a monotone clock."""

    now: float = 0.0
    _heap: list[Event] = field(default_factory=list)
    _next_seq: int = 0
    trace: list[Event] = field(default_factory=list)

    def schedule(self, fire_at: float, kind: str, tag: str, payload: Any = None) -> Event:
        if fire_at < self.now:
            raise CausalityError(
                f"cannot schedule {kind} at {fire_at} before current time {self.now}"
            )
        event = Event(fire_at, self._next_seq, kind, tag, payload)
        self._next_seq += 1
        heapq.heappush(self._heap, event)
        return event

    def schedule_after(self, delay: float, kind: str, tag: str, payload: Any = None) -> Event:
        return self.schedule(self.now + delay, kind, tag, payload)

    def pending(self) -> int:
        return len(self._heap)

    def pending_kinds(self) -> list[str]:
        """Kinds of events still queued (unordered)."""
        return [event.kind for event in self._heap]

    def run(
        self,
        dispatch: Callable[[Event], bool],
        stop: Callable[[], bool] | None = None,
    ) -> list[Event]:
        """Fire events in order until ``stop()`` or queue exhaustion.

        ``dispatch`` returns whether the event belongs in the trace (stale
        mining attempts and drain-discarded work fire but leave no record).
        With a stop condition, running out of events first is an error; the
        stop is checked after each fired event.
        """
        while self._heap:
            event = heapq.heappop(self._heap)
            assert event.fire_at >= self.now, "event queue violated time order"
            self.now = event.fire_at
            if dispatch(event):
                self.trace.append(event)
            if stop is not None and stop():
                return self.trace
        if stop is not None and not stop():
            raise StarvationError(
                f"event queue exhausted at t={self.now} with stop condition unmet"
            )
        return self.trace


def format_trace(events: Iterable[Event]) -> str:
    """One event per line: time, sequence number, kind, payload id."""
    return "".join(event.trace_line() + "\n" for event in events)
