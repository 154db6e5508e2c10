"""Dataset ingestion, standardization, balanced subsampling and splits.

Supports the CIFAR-10 binary batch format plus a synthetic
Gaussian-cluster generator whose Bayes-optimal accuracy is known in
closed form for two classes, so desk-scale runs have a ground truth.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import InsufficientClassSamples, LabelOutOfRange, TruncatedFile

# Per-channel RGB statistics used to standardize CIFAR-10 pixels.
CIFAR10_CHANNEL_MEANS = (125.3, 123.0, 113.9)
CIFAR10_CHANNEL_STDS = (63.0, 62.1, 66.7)

_RECORD_BYTES = 3073  # 1 label byte + 32*32*3 pixel bytes
_CIFAR_TRAIN_FILES = tuple(f"data_batch_{i}.bin" for i in range(1, 6))
_CIFAR_TEST_FILE = "test_batch.bin"


@dataclass(frozen=True)
class LabeledSet:
    x: np.ndarray  # (N, ...) inputs
    y: np.ndarray  # (N,) integer labels

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class DatasetSplit:
    """Fixed subsampled sets for kernel scoring plus the full train/val pools."""

    nngp_train: LabeledSet
    nngp_val: LabeledSet
    full_train: LabeledSet
    full_val: LabeledSet
    num_labels: int

    def __post_init__(self):
        counts = np.bincount(self.nngp_train.y, minlength=self.num_labels)
        if counts.max() - counts.min() > 1:
            raise ValueError("nngp_train labels are not balanced")


def read_cifar_batch(path) -> LabeledSet:
    """Parse one binary batch: per record 1 label byte then 3072 pixel bytes
    (1024 R, 1024 G, 1024 B, row-major)."""
    raw = np.fromfile(path, dtype=np.uint8)
    if raw.size % _RECORD_BYTES != 0:
        raise TruncatedFile(f"{path}: {raw.size} bytes is not a whole record count")
    records = raw.reshape(-1, _RECORD_BYTES)
    labels = records[:, 0].astype(np.int64)
    if labels.size and labels.max() > 9:
        raise LabelOutOfRange(f"{path}: label byte {labels.max()} > 9")
    pixels = records[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return LabeledSet(pixels.copy(), labels)


def load_cifar(directory) -> tuple[LabeledSet, LabeledSet]:
    """Load the five training batches and the test batch from `directory`."""
    trains = [read_cifar_batch(os.path.join(directory, f)) for f in _CIFAR_TRAIN_FILES]
    train = LabeledSet(np.concatenate([t.x for t in trains]),
                       np.concatenate([t.y for t in trains]))
    test = read_cifar_batch(os.path.join(directory, _CIFAR_TEST_FILE))
    return train, test


def standardize(images: np.ndarray,
                means=CIFAR10_CHANNEL_MEANS,
                stds=CIFAR10_CHANNEL_STDS) -> np.ndarray:
    """Per-channel (x - mean) / std in float64. No augmentation of any kind."""
    images = np.asarray(images, dtype=np.float64)
    return (images - np.asarray(means)) / np.asarray(stds)


def subsample_balanced(dataset: LabeledSet, n: int, seed: int,
                       num_labels: int | None = None) -> tuple[LabeledSet, np.ndarray]:
    """Class-balanced subset of size n; returns (subset, chosen indices).

    Counts differ by at most one across classes (extra samples go to the
    lowest class indices). Deterministic given seed.
    """
    labels = dataset.y
    num_labels = int(num_labels if num_labels is not None else labels.max() + 1)
    base, rem = divmod(n, num_labels)
    rng = np.random.default_rng(seed)
    chosen = []
    for c in range(num_labels):
        want = base + (1 if c < rem else 0)
        pool = np.flatnonzero(labels == c)
        if len(pool) < want:
            raise InsufficientClassSamples(
                f"class {c} has {len(pool)} samples, need {want}")
        chosen.append(rng.choice(pool, size=want, replace=False))
    idx = np.sort(np.concatenate(chosen))
    return LabeledSet(dataset.x[idx], labels[idx]), idx


def make_synthetic(num_labels: int, dims: int, per_class: int,
                   separation: float, seed: int) -> LabeledSet:
    """Isotropic unit-variance Gaussian clusters with pairwise mean
    distance `separation`.

    Two classes sit at +/- separation/2 along the normalized all-ones
    direction, so the Bayes accuracy is Phi(separation / 2); more classes
    use one coordinate axis each (requires dims >= num_labels).
    """
    rng = np.random.default_rng(seed)
    if num_labels == 2:
        u = np.ones(dims) / np.sqrt(dims)
        means = np.stack([-0.5 * separation * u, 0.5 * separation * u])
    else:
        if dims < num_labels:
            raise ValueError("dims must be >= num_labels for axis-aligned means")
        means = np.zeros((num_labels, dims))
        for c in range(num_labels):
            means[c, c] = separation / np.sqrt(2.0)
    x = rng.standard_normal((num_labels * per_class, dims))
    y = np.repeat(np.arange(num_labels), per_class)
    x += means[y]
    perm = rng.permutation(len(y))
    return LabeledSet(x[perm], y[perm])


def make_split(train_pool: LabeledSet, val_pool: LabeledSet, n_d: int,
               n_val: int, seed: int, num_labels: int | None = None) -> DatasetSplit:
    """Balanced NNGP train/val subsets from disjoint train/val pools."""
    num_labels = int(num_labels if num_labels is not None
                     else max(train_pool.y.max(), val_pool.y.max()) + 1)
    nngp_train, _ = subsample_balanced(train_pool, n_d, seed, num_labels)
    nngp_val, _ = subsample_balanced(val_pool, n_val, seed + 1, num_labels)
    return DatasetSplit(nngp_train, nngp_val, train_pool, val_pool, num_labels)


def split_pools(dataset: LabeledSet, n_train: int, seed: int) -> tuple[LabeledSet, LabeledSet]:
    """Disjoint train/validation pools by a seeded permutation."""
    perm = np.random.default_rng(seed).permutation(len(dataset))
    tr, va = perm[:n_train], perm[n_train:]
    return (LabeledSet(dataset.x[tr], dataset.y[tr]),
            LabeledSet(dataset.x[va], dataset.y[va]))
