"""Learning tasks, local SGD, weighted aggregation, and a FedAvg reference.

Two desk-scale synthetic tasks are provided: linear regression (with a
closed-form least-squares solution for oracle checks) and 10-class logistic
classification on Gaussian blobs. Models are dense float vectors; the
logistic task flattens its weight matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import StreamRegistry

LINEAR_REGRESSION = "synthetic-linear-regression"
LOGISTIC_BLOBS = "synthetic-logistic-blobs"
TASK_KINDS = (LINEAR_REGRESSION, LOGISTIC_BLOBS)


class TrainingDivergedError(RuntimeError):
    """Raised when a loss or gradient stops being finite mid-training."""


@dataclass(frozen=True, slots=True)
class ModelParams:
    """Immutable dense parameter vector."""

    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float64))
        self.values.setflags(write=False)

    @property
    def dim(self) -> int:
        return int(self.values.size)

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.values).all())


@dataclass(frozen=True, slots=True)
class Shard:
    """One client's private slice of the training pool."""

    client: int
    x: np.ndarray
    y: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.x.shape[0])


@dataclass(frozen=True, slots=True)
class TrainingCostModel:
    """Compute cost of one epoch over one sample, in instructions."""

    instructions_per_sample_epoch: float

    def __post_init__(self):
        if not self.instructions_per_sample_epoch > 0:
            raise ValueError("instructions_per_sample_epoch must be > 0")


def _augment(x: np.ndarray) -> np.ndarray:
    """Append a constant-1 bias column."""
    return np.hstack([x, np.ones((x.shape[0], 1))])


class LinearRegressionTask:
    """Least-squares regression; accuracy = fraction of predictions within
    an absolute-error threshold of the target."""

    kind = LINEAR_REGRESSION

    def __init__(self, n_features: int, noise_std: float, accuracy_threshold: float):
        self.n_features = n_features
        self.noise_std = noise_std
        self.accuracy_threshold = accuracy_threshold

    @property
    def dim(self) -> int:
        return self.n_features + 1

    def sample(self, gen: np.random.Generator, n: int, true_w: np.ndarray):
        x = gen.standard_normal((n, self.n_features))
        y = _augment(x) @ true_w + self.noise_std * gen.standard_normal(n)
        return x, y

    def loss(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        residual = _augment(x) @ w - y
        return float(0.5 * np.mean(residual**2))

    def gradient(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        xa = _augment(x)
        return xa.T @ (xa @ w - y) / x.shape[0]

    def accuracy(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        errors = np.abs(_augment(x) @ w - y)
        return float(np.mean(errors <= self.accuracy_threshold))

    def label_key(self, y: np.ndarray) -> np.ndarray:
        return y  # ordering key for label-skewed partitions

    def histogram_labels(self, y: np.ndarray, edges: np.ndarray) -> np.ndarray:
        return np.clip(np.searchsorted(edges, y), 0, len(edges))


class LogisticBlobsTask:
    """Multinomial logistic regression on Gaussian class blobs."""

    kind = LOGISTIC_BLOBS

    def __init__(self, n_features: int, n_classes: int = 10, center_scale: float = 4.0):
        self.n_features = n_features
        self.n_classes = n_classes
        self.center_scale = center_scale

    @property
    def dim(self) -> int:
        return (self.n_features + 1) * self.n_classes

    def sample(self, gen: np.random.Generator, n: int, centers: np.ndarray):
        labels = np.arange(n) % self.n_classes  # exactly balanced
        labels = labels[gen.permutation(n)]
        x = centers[labels] + gen.standard_normal((n, self.n_features))
        return x, labels.astype(np.int64)

    def _logits(self, w: np.ndarray, x: np.ndarray) -> np.ndarray:
        return _augment(x) @ w.reshape(self.n_features + 1, self.n_classes)

    def loss(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        logits = self._logits(w, x)
        logits -= logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(logits).sum(axis=1))
        return float(np.mean(log_norm - logits[np.arange(len(y)), y]))

    def gradient(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        logits = self._logits(w, x)
        logits -= logits.max(axis=1, keepdims=True)
        probs = np.exp(logits)
        probs /= probs.sum(axis=1, keepdims=True)
        probs[np.arange(len(y)), y] -= 1.0
        return (_augment(x).T @ probs / x.shape[0]).ravel()

    def accuracy(self, w: np.ndarray, x: np.ndarray, y: np.ndarray) -> float:
        predictions = self._logits(w, x).argmax(axis=1)
        return float(np.mean(predictions == y))

    def label_key(self, y: np.ndarray) -> np.ndarray:
        return y.astype(np.float64)

    def histogram_labels(self, y: np.ndarray, edges: np.ndarray) -> np.ndarray:
        return y.astype(np.int64)


@dataclass
class LearningTask:
    """A generated dataset bound to its loss/gradient/accuracy definitions."""

    impl: LinearRegressionTask | LogisticBlobsTask
    train_x: np.ndarray
    train_y: np.ndarray
    val_x: np.ndarray
    val_y: np.ndarray
    test_x: np.ndarray
    test_y: np.ndarray
    histogram_edges: np.ndarray = field(default_factory=lambda: np.array([]))

    @property
    def kind(self) -> str:
        return self.impl.kind

    @property
    def dim(self) -> int:
        return self.impl.dim

    @property
    def split_fractions(self) -> tuple[float, float, float]:
        total = len(self.train_y) + len(self.val_y) + len(self.test_y)
        return (len(self.train_y) / total, len(self.val_y) / total, len(self.test_y) / total)

    def loss(self, model: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
        return self.impl.loss(model.values, x, y)

    def gradient(self, model: ModelParams, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        return self.impl.gradient(model.values, x, y)

    def init_model(self, gen: np.random.Generator) -> ModelParams:
        return ModelParams(0.01 * gen.standard_normal(self.dim))

    def shard_histogram(self, shard: Shard) -> dict[int, int]:
        labels = self.impl.histogram_labels(shard.y, self.histogram_edges)
        buckets, counts = np.unique(labels, return_counts=True)
        return {int(b): int(c) for b, c in zip(buckets, counts)}


def generate_task(
    kind: str,
    seed: int,
    n_clients: int,
    n_features: int,
    n_total: int,
    noniid_skew: float = 0.0,
) -> tuple[LearningTask, list[Shard]]:
    """Build a deterministic dataset and partition it into client shards.

    ``n_total`` is the size of the training pool, split into ``n_clients``
    shards of n_total // n_clients samples (remainder spread over the last
    shards). A held-out pool of n_total // 4 extra samples is split 70%
    validation / 30% test. ``noniid_skew`` in [0, 1] interpolates between an
    IID partition (0) and shards sorted by label (1).
    """
    if n_total < n_clients:
        raise ValueError("n_total must be at least n_clients")
    if not 0.0 <= noniid_skew <= 1.0:
        raise ValueError("noniid_skew must lie in [0, 1]")

    gen = StreamRegistry(seed).stream("task-data").generator
    heldout = n_total // 4
    n_val = round(0.7 * heldout)
    n_test = heldout - n_val

    if kind == LINEAR_REGRESSION:
        impl = LinearRegressionTask(
            n_features=n_features, noise_std=0.1, accuracy_threshold=0.2
        )
        true_w = gen.standard_normal(impl.dim)
        train_x, train_y = impl.sample(gen, n_total, true_w)
        val_x, val_y = impl.sample(gen, n_val, true_w)
        test_x, test_y = impl.sample(gen, n_test, true_w)
        edges = np.quantile(train_y, [0.25, 0.5, 0.75])
    elif kind == LOGISTIC_BLOBS:
        impl = LogisticBlobsTask(n_features=n_features)
        centers = impl.center_scale * gen.standard_normal((impl.n_classes, n_features))
        train_x, train_y = impl.sample(gen, n_total, centers)
        val_x, val_y = impl.sample(gen, n_val, centers)
        test_x, test_y = impl.sample(gen, n_test, centers)
        edges = np.array([])
    else:
        raise ValueError(f"unknown task kind {kind!r}; expected one of {TASK_KINDS}")

    task = LearningTask(impl, train_x, train_y, val_x, val_y, test_x, test_y, edges)
    shards = _partition(task, gen, n_clients, noniid_skew)
    return task, shards


def _partition(
    task: LearningTask, gen: np.random.Generator, n_clients: int, skew: float
) -> list[Shard]:
    """Contiguous partition of an ordering that interpolates IID ↔ label-sorted."""
    n = len(task.train_y)
    label = task.impl.label_key(task.train_y)
    label_span = float(label.max() - label.min()) or 1.0
    jitter = gen.random(n)
    order = np.argsort(skew * (label - label.min()) / label_span + (1.0 - skew) * jitter)

    base, remainder = divmod(n, n_clients)
    sizes = [base] * (n_clients - remainder) + [base + 1] * remainder
    shards, start = [], 0
    for client, size in enumerate(sizes):
        idx = order[start : start + size]
        shards.append(Shard(client, task.train_x[idx], task.train_y[idx]))
        start += size
    return shards


def local_update(
    task: LearningTask,
    start: ModelParams,
    shard: Shard,
    learning_rate: float,
    epochs: int,
    batch_size: int,
    gen: np.random.Generator,
) -> ModelParams:
    """Mini-batch SGD from ``start``: E epochs of seeded-shuffle batches.

    The final short batch of each epoch is used. The input model is never
    mutated.
    """
    n = shard.n_samples
    if n == 0:
        raise ValueError("cannot train on an empty shard")
    if not learning_rate > 0:
        raise ValueError("learning rate must be > 0")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")
    if not 1 <= batch_size <= n:
        raise ValueError(f"batch size must be in [1, {n}], got {batch_size}")

    w = start.values.copy()
    with np.errstate(over="ignore", invalid="ignore"):  # divergence is reported below
        for epoch in range(epochs):
            order = gen.permutation(n)
            for lo in range(0, n, batch_size):
                batch = order[lo : lo + batch_size]
                grad = task.impl.gradient(w, shard.x[batch], shard.y[batch])
                if not np.isfinite(grad).all():
                    raise TrainingDivergedError(
                        f"non-finite gradient for client {shard.client} in epoch {epoch}"
                        " (learning rate too high?)"
                    )
                w -= learning_rate * grad
            if not np.isfinite(w).all():
                raise TrainingDivergedError(
                    f"non-finite parameters for client {shard.client} after epoch {epoch}"
                    " (learning rate too high?)"
                )
    return ModelParams(w)


def aggregate(updates: Sequence[tuple[ModelParams, int]]) -> tuple[ModelParams, int]:
    """Sample-count-weighted average: Σ (n_k / n_total) · w_k."""
    if not updates:
        raise ValueError("cannot aggregate an empty update list")
    dims = {model.dim for model, _ in updates}
    if len(dims) != 1:
        raise ValueError(f"aggregation dimension mismatch: {sorted(dims)}")
    total = sum(n for _, n in updates)
    if total <= 0:
        raise ValueError("total sample count must be positive")
    stacked = np.stack([model.values for model, _ in updates])
    weights = np.array([n for _, n in updates], dtype=np.float64) / total
    return ModelParams(weights @ stacked), total


def training_duration(
    n_samples: int, epochs: int, compute_power: float, cost: TrainingCostModel
) -> float:
    """Deterministic seconds to run E epochs over n samples on one device."""
    if n_samples <= 0 or epochs <= 0 or compute_power <= 0:
        raise ValueError("n_samples, epochs, and compute_power must be positive")
    return cost.instructions_per_sample_epoch * n_samples * epochs / compute_power


def evaluate_accuracy(task: LearningTask, model: ModelParams, x: np.ndarray, y: np.ndarray) -> float:
    """Fraction of correct predictions under the task's prediction rule."""
    if len(y) == 0:
        raise ValueError("cannot evaluate accuracy on an empty dataset")
    return task.impl.accuracy(model.values, x, y)


def reference_fedavg(
    task: LearningTask,
    shards: Sequence[Shard],
    learning_rate: float,
    epochs: int,
    batch_size: int,
    rounds: int,
    seed: int,
) -> list[ModelParams]:
    """Synchronous FedAvg over all clients each round; unweighted average.

    Uses the same named RNG streams as the simulator ("model-init",
    "training/{k}") so that a degenerate simulator run can be compared
    round-for-round.
    """
    streams = StreamRegistry(seed)
    model = task.init_model(streams.stream("model-init").generator)
    trajectory = [model]
    for _ in range(rounds):
        updates = [
            local_update(
                task, model, shard, learning_rate, epochs, batch_size,
                streams.stream(f"training/{shard.client}").generator,
            )
            for shard in shards
        ]
        model = ModelParams(np.mean([u.values for u in updates], axis=0))
        trajectory.append(model)
    return trajectory
