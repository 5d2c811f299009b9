"""Task datasets, synthetic related-task pairs, and the multi-task batch sampler."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .autodiff import Prng


class DataError(ValueError):
    pass


@dataclass
class TaskDataset:
    name: str
    features: np.ndarray  # (M, *sample_shape)
    labels: np.ndarray  # (M,) ints in [0, n_classes)
    n_classes: int
    train_idx: np.ndarray
    test_idx: np.ndarray
    label_values: list | None = None  # original label for each dense index

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.train_idx = np.asarray(self.train_idx, dtype=np.int64)
        self.test_idx = np.asarray(self.test_idx, dtype=np.int64)
        m = self.labels.shape[0]
        if self.features.shape[0] != m:
            raise DataError(f"{self.name}: {self.features.shape[0]} feature rows for {m} labels")
        if m and (self.labels.min() < 0 or self.labels.max() >= self.n_classes):
            raise DataError(f"{self.name}: labels must lie in [0, {self.n_classes})")
        both = np.concatenate([self.train_idx, self.test_idx])
        if both.size != m or not np.array_equal(np.sort(both), np.arange(m)):
            raise DataError(f"{self.name}: train/test indices must be disjoint and cover all {m} samples")

    @property
    def sample_shape(self) -> tuple[int, ...]:
        return self.features.shape[1:]

    @property
    def train_features(self) -> np.ndarray:
        return self.features[self.train_idx]

    @property
    def train_labels(self) -> np.ndarray:
        return self.labels[self.train_idx]

    @property
    def test_features(self) -> np.ndarray:
        return self.features[self.test_idx]

    @property
    def test_labels(self) -> np.ndarray:
        return self.labels[self.test_idx]

    def standardized(self) -> TaskDataset:
        """Zero mean, unit variance per feature, statistics from the train split."""
        train = self.train_features
        mean = train.mean(axis=0)
        std = train.std(axis=0)
        std = np.where(std > 0, std, 1.0)
        return replace(self, features=(self.features - mean) / std)


def split_indices(m: int, test_fraction: float, prng: Prng) -> tuple[np.ndarray, np.ndarray]:
    if not 0.0 <= test_fraction < 1.0:
        raise DataError(f"test fraction must lie in [0, 1), got {test_fraction}")
    order = prng.permutation(m)
    n_test = int(round(m * test_fraction))
    if test_fraction > 0 and m >= 2:
        n_test = min(max(n_test, 1), m - 1)
    return np.sort(order[n_test:]), np.sort(order[:n_test])


@dataclass(frozen=True)
class SyntheticTaskSpec:
    dim: int = 16
    n_classes: int = 4
    samples_a: int = 1000
    samples_b: int = 1000
    rho: float = 1.0
    noise: float = 0.5
    seed: int = 0
    test_fraction: float = 0.25
    image: bool = False  # reshape features to (1, s, s) with s*s == dim


def _orthonormal_rows(prng: Prng, d: int) -> np.ndarray:
    q, r = np.linalg.qr(prng.normal((d, d)))
    return (q * np.sign(np.diag(r))).T


def gen_synthetic_pair(spec: SyntheticTaskSpec) -> tuple[TaskDataset, TaskDataset]:
    """Two classification tasks over shared latent inputs.

    Task A's label is the argmax of a random orthonormal projection of the
    latent. Each task-B sample takes, with probability ``rho``, a fixed
    permutation of its task-A label, otherwise the argmax of a second
    projection orthogonal to the first (independent of task A when
    ``dim >= 2 * n_classes``). Features are latent plus Gaussian noise drawn
    separately per task; task B uses the first ``samples_b`` latents.
    """
    if not 0.0 <= spec.rho <= 1.0:
        raise DataError(f"relatedness rho must lie in [0, 1], got {spec.rho}")
    if spec.dim < spec.n_classes:
        raise DataError(f"latent dim {spec.dim} must be at least n_classes {spec.n_classes}")
    if spec.n_classes < 2 or spec.samples_a < 1 or spec.samples_b < 1 or spec.noise < 0:
        raise DataError(f"invalid synthetic spec {spec}")
    side = int(math.isqrt(spec.dim))
    if spec.image and side * side != spec.dim:
        raise DataError(f"image features need a square dim, got {spec.dim}")

    prng = Prng(spec.seed).child("synthetic")
    n = spec.n_classes
    m = max(spec.samples_a, spec.samples_b)
    latent = prng.child("latent").normal((m, spec.dim))
    basis = _orthonormal_rows(prng.child("maps"), spec.dim)
    map_a = basis[:n]
    if spec.dim >= 2 * n:
        map_b = basis[n:2 * n]
    else:
        map_b = prng.child("map_b").normal((n, spec.dim))
    label_a = np.argmax(latent @ map_a.T, axis=1)
    independent = np.argmax(latent @ map_b.T, axis=1)
    perm = prng.child("perm").permutation(n)
    related = prng.child("coin").uniform(m) < spec.rho
    label_b = np.where(related, perm[label_a], independent)

    out = []
    for name, count, labels in (("A", spec.samples_a, label_a), ("B", spec.samples_b, label_b)):
        feats = latent[:count] + spec.noise * prng.child("noise", name).normal((count, spec.dim))
        if spec.image:
            feats = feats.reshape(count, 1, side, side)
        train, test = split_indices(count, spec.test_fraction, prng.child("split", name))
        out.append(TaskDataset(f"task{name}", feats, labels[:count], n, train, test))
    return out[0], out[1]


def load_csv(path, feature_columns: Sequence[str] | None = None, label_column: str | None = None,
             test_fraction: float = 0.25, seed: int = 0, name: str | None = None,
             sample_shape: Sequence[int] | None = None) -> TaskDataset:
    """Read a numeric table with one header row.

    Defaults: the last column is the label, all others are features. Labels
    are re-indexed to ``0..n_classes-1`` in sorted order of their values;
    ``label_values`` records the original value of each index.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in header]
        raw_rows = [r for r in reader if r and any(c.strip() for c in r)]
    if not raw_rows:
        raise DataError(f"{path}: no data rows")
    label_column = label_column if label_column is not None else header[-1]
    if label_column not in header:
        raise DataError(f"{path}: label column {label_column!r} not in header {header}")
    if feature_columns is None:
        feature_columns = [h for h in header if h != label_column]
    missing = [c for c in feature_columns if c not in header]
    if missing:
        raise DataError(f"{path}: feature columns {missing} not in header")
    cols = [header.index(c) for c in feature_columns]
    lab = header.index(label_column)

    feats = np.empty((len(raw_rows), len(cols)))
    raw_labels = np.empty(len(raw_rows))
    for r, row in enumerate(raw_rows, start=2):
        if len(row) != len(header):
            raise DataError(f"{path}: row {r} has {len(row)} cells, header has {len(header)}")
        for j, c in enumerate(cols + [lab]):
            try:
                value = float(row[c])
            except ValueError:
                raise DataError(f"{path}: non-numeric value {row[c]!r} at row {r}, column {header[c]!r}") from None
            if j < len(cols):
                feats[r - 2, j] = value
            else:
                raw_labels[r - 2] = value
    values, labels = np.unique(raw_labels, return_inverse=True)
    if sample_shape is not None:
        feats = feats.reshape((len(raw_rows), *sample_shape))
    train, test = split_indices(len(raw_rows), test_fraction, Prng(seed).child("split", str(path.name)))
    mapping = [int(v) if float(v).is_integer() else float(v) for v in values]
    return TaskDataset(name or path.stem, feats, labels, len(values), train, test, mapping)


def default_ratio(sizes: Sequence[int], batch_size: int) -> list[int]:
    """Per-task batch counts proportional to ``sizes``, at least 1 each, summing to ``batch_size``."""
    k = len(sizes)
    if batch_size < k:
        raise DataError(f"batch size {batch_size} cannot hold one sample of each of {k} tasks")
    total = float(sum(sizes))
    raw = [batch_size * s / total for s in sizes]
    ratio = [max(1, int(round(r))) for r in raw]
    while sum(ratio) > batch_size:
        i = max(range(k), key=lambda j: (ratio[j] - raw[j], ratio[j]) if ratio[j] > 1 else (-math.inf, 0))
        ratio[i] -= 1
    while sum(ratio) < batch_size:
        i = max(range(k), key=lambda j: raw[j] - ratio[j])
        ratio[i] += 1
    return ratio


@dataclass
class Batch:
    features: list[np.ndarray]
    labels: list[np.ndarray]
    task_ids: list[int]

    @property
    def size(self) -> int:
        return sum(len(y) for y in self.labels)


@dataclass
class MultiTaskDataset:
    """Interleaving sampler: every batch holds ``ratio[k]`` training samples of task k.

    Each task walks its own shuffled order and reshuffles when it wraps, so
    small tasks repeat more often than large ones.
    """

    tasks: list[TaskDataset]
    batch_size: int = 8
    seed: int = 0
    ratio: list[int] | None = None
    iteration: int = 0
    _orders: list[np.ndarray] = field(default_factory=list, repr=False)
    _cursors: list[int] = field(default_factory=list, repr=False)
    _epochs: list[int] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if not self.tasks:
            raise DataError("need at least one task")
        if self.ratio is None:
            self.ratio = default_ratio([len(t.train_idx) for t in self.tasks], self.batch_size)
        self.ratio = [int(r) for r in self.ratio]
        if len(self.ratio) != len(self.tasks):
            raise DataError(f"{len(self.ratio)} ratio entries for {len(self.tasks)} tasks")
        zero = [i for i, r in enumerate(self.ratio) if r < 1]
        if zero:
            raise DataError(f"ratio entry for task {zero[0]} is {self.ratio[zero[0]]}; every batch must contain every task")
        if sum(self.ratio) != self.batch_size:
            raise DataError(f"ratio {self.ratio} sums to {sum(self.ratio)}, not batch size {self.batch_size}")
        for t in self.tasks:
            if len(t.train_idx) == 0:
                raise DataError(f"task {t.name} has an empty training split")
        self.prng = Prng(self.seed).child("sampler")
        if not self._orders:
            self._epochs = [0] * len(self.tasks)
            self._orders = [self._shuffle(k) for k in range(len(self.tasks))]
            self._cursors = [0] * len(self.tasks)

    @property
    def k(self) -> int:
        return len(self.tasks)

    def _shuffle(self, k: int) -> np.ndarray:
        idx = self.tasks[k].train_idx
        return idx[self.prng.child("order", k, self._epochs[k]).permutation(len(idx))]

    def _take(self, k: int, count: int) -> np.ndarray:
        out = []
        while count:
            order = self._orders[k]
            pos = self._cursors[k]
            if pos == len(order):
                self._epochs[k] += 1
                self._orders[k] = order = self._shuffle(k)
                pos = 0
            n = min(count, len(order) - pos)
            out.append(order[pos:pos + n])
            self._cursors[k] = pos + n
            count -= n
        return np.concatenate(out)

    def next_batch(self) -> Batch:
        feats, labels = [], []
        for k, task in enumerate(self.tasks):
            idx = self._take(k, self.ratio[k])
            feats.append(task.features[idx])
            labels.append(task.labels[idx])
        self.iteration += 1
        return Batch(feats, labels, list(range(self.k)))

    def state_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "cursors": list(self._cursors),
            "epochs": list(self._epochs),
        }

    def load_state_dict(self, state: dict) -> None:
        self.iteration = int(state["iteration"])
        self._epochs = [int(e) for e in state["epochs"]]
        self._orders = [self._shuffle(k) for k in range(self.k)]
        self._cursors = [int(c) for c in state["cursors"]]


def next_batch(mtds: MultiTaskDataset) -> Batch:
    return mtds.next_batch()
