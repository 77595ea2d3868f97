"""Synthetic domain-shift tasks, CSV ingestion and two-domain minibatching."""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, DataError
from .nn import make_rng

CLUSTER_RADIUS = 3.0


class Domain(enum.Enum):
    Source = "source"
    Target = "target"


class Task(enum.Enum):
    Clusters = "clusters"
    Moons = "moons"


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None
    domain: Domain
    num_classes: int

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim != 2 or x.shape[0] < 1 or x.shape[1] < 1:
            raise DataError(f"features must be a nonempty 2-D array, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise DataError("features contain non-finite values")
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels, dtype=np.int64)
            if y.shape != (x.shape[0],):
                raise DataError(f"{y.size} labels for {x.shape[0]} rows")
            bad = np.flatnonzero((y < 0) | (y >= self.num_classes))
            if bad.size:
                raise DataError(
                    f"label {y[bad[0]]} at row {bad[0]} outside [0, {self.num_classes})"
                )
            object.__setattr__(self, "labels", y)

    def __len__(self):
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def with_features(self, features: np.ndarray) -> "Dataset":
        return Dataset(features, self.labels, self.domain, self.num_classes)

    def unlabeled(self) -> "Dataset":
        return Dataset(self.features, None, self.domain, self.num_classes)


@dataclass(frozen=True)
class Batch:
    xs: np.ndarray
    ys: np.ndarray
    xt: np.ndarray


@dataclass(frozen=True)
class SyntheticSpec:
    task: Task = Task.Clusters
    num_classes: int = 3
    samples_per_domain: int = 600
    rotation: float = 0.0  # radians, counter-clockwise about the origin
    translation: tuple[float, float] = (0.0, 0.0)
    noise_std: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.task, str):
            try:
                object.__setattr__(self, "task", Task(self.task))
            except ValueError:
                raise ConfigError(f"unknown task {self.task!r}; expected clusters or moons") from None
        if not self.noise_std > 0:
            raise ConfigError(f"noise_std must be positive, got {self.noise_std}")
        if self.samples_per_domain < 1:
            raise ConfigError("samples_per_domain must be >= 1")
        if len(self.translation) != 2:
            raise ConfigError("translation must have 2 components")


def rigid_transform(points: np.ndarray, rotation: float, translation) -> np.ndarray:
    """Rotate 2-D points about the origin by ``rotation`` radians, then translate."""
    c, s = math.cos(rotation), math.sin(rotation)
    rot = np.array([[c, -s], [s, c]])
    return points @ rot.T + np.asarray(translation, dtype=np.float64)


def cluster_means(num_classes: int) -> np.ndarray:
    """Class means evenly spaced on the circle of radius 3, starting at angle 0."""
    angles = 2.0 * np.pi * np.arange(num_classes) / num_classes
    return CLUSTER_RADIUS * np.stack([np.cos(angles), np.sin(angles)], axis=1)


def _domain_rngs(seed: int):
    return make_rng([seed, 0]), make_rng([seed, 1])


def gen_clusters(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Isotropic Gaussian blobs around :func:`cluster_means`; target is rigidly moved."""
    if spec.task is not Task.Clusters:
        raise ConfigError(f"gen_clusters got a {spec.task.value} spec")
    if spec.num_classes < 2:
        raise ConfigError(f"clusters need at least 2 classes, got {spec.num_classes}")
    means = cluster_means(spec.num_classes)
    labels = np.arange(spec.samples_per_domain) % spec.num_classes
    out = []
    for rng, domain in zip(_domain_rngs(spec.seed), Domain):
        x = means[labels] + spec.noise_std * rng.standard_normal((labels.size, 2))
        if domain is Domain.Target:
            x = rigid_transform(x, spec.rotation, spec.translation)
        out.append(Dataset(x, labels, domain, spec.num_classes))
    return out[0], out[1]


def moons_curve(t: np.ndarray, label: int) -> np.ndarray:
    """Noise-free moon points: upper ``(cos t, sin t)``, lower ``(1 - cos t, 0.5 - sin t)``."""
    if label == 0:
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    return np.stack([1.0 - np.cos(t), 0.5 - np.sin(t)], axis=1)


def gen_moons(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    """Two interleaved half circles with Gaussian noise; target is rigidly moved."""
    if spec.task is not Task.Moons:
        raise ConfigError(f"gen_moons got a {spec.task.value} spec")
    if spec.num_classes != 2:
        raise ConfigError(f"moons has exactly 2 classes, got {spec.num_classes}")
    n = spec.samples_per_domain
    n_upper = (n + 1) // 2
    n_lower = n - n_upper
    clean = np.concatenate(
        [
            moons_curve(np.linspace(0.0, np.pi, n_upper), 0),
            moons_curve(np.linspace(0.0, np.pi, n_lower), 1),
        ]
    )
    labels = np.concatenate([np.zeros(n_upper, dtype=np.int64), np.ones(n_lower, dtype=np.int64)])
    out = []
    for rng, domain in zip(_domain_rngs(spec.seed), Domain):
        x = clean + spec.noise_std * rng.standard_normal(clean.shape)
        if domain is Domain.Target:
            x = rigid_transform(x, spec.rotation, spec.translation)
        out.append(Dataset(x, labels, domain, 2))
    return out[0], out[1]


def generate(spec: SyntheticSpec) -> tuple[Dataset, Dataset]:
    return gen_clusters(spec) if spec.task is Task.Clusters else gen_moons(spec)


def standardize(source: Dataset, target: Dataset) -> tuple[Dataset, Dataset]:
    """Shift and scale both domains by the source per-column mean and std."""
    mean = source.features.mean(axis=0)
    std = source.features.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return (
        source.with_features((source.features - mean) / std),
        target.with_features((target.features - mean) / std),
    )


def load_csv(path, label_column: str | None, num_classes: int, domain: Domain = Domain.Source) -> Dataset:
    """Read a header-first, comma-separated UTF-8 file.

    Every column except ``label_column`` is a float feature. Row numbers in
    error messages count the header as row 1.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if label_column is not None and label_column not in header:
            raise DataError(f"{path}: no column named {label_column!r} in header {header}")
        label_idx = header.index(label_column) if label_column is not None else None
        feats, labels = [], []
        for rowno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(header):
                raise DataError(f"{path}: row {rowno} has {len(row)} fields, header has {len(header)}")
            values = []
            for j, cell in enumerate(row):
                if j == label_idx:
                    try:
                        y = int(cell.strip())
                    except ValueError:
                        raise DataError(f"{path}: row {rowno}: label {cell!r} is not an integer") from None
                    if not 0 <= y < num_classes:
                        raise DataError(f"{path}: row {rowno}: label {y} outside [0, {num_classes})")
                    labels.append(y)
                    continue
                try:
                    v = float(cell)
                except ValueError:
                    raise DataError(f"{path}: row {rowno}: {header[j]}={cell!r} is not numeric") from None
                if not math.isfinite(v):
                    raise DataError(f"{path}: row {rowno}: {header[j]} is not finite")
                values.append(v)
            feats.append(values)
    if not feats:
        raise DataError(f"{path}: no data rows")
    return Dataset(
        np.array(feats, dtype=np.float64),
        np.array(labels, dtype=np.int64) if label_idx is not None else None,
        domain,
        num_classes,
    )


def write_csv(path, dataset: Dataset, label_column: str = "y") -> None:
    """Inverse of :func:`load_csv`; floats keep full round-trip precision."""
    d = dataset.dim
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"x{j + 1}" for j in range(d)] + ([label_column] if dataset.labeled else []))
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.labeled:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)


def _index_stream(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` indices drawn from back-to-back fresh permutations of ``range(n)``."""
    chunks, have = [], 0
    while have < count:
        chunks.append(rng.permutation(n))
        have += n
    return np.concatenate(chunks)[:count]


def batch_indices(source_len: int, target_len: int, batch_size: int, epoch_seed):
    """Per-batch ``(source_idx, target_idx)`` arrays for one epoch.

    The epoch covers the larger domain once, rounded up to whole batches;
    either domain wraps around with a reshuffle so every batch is full.
    Source and target shuffles use independent streams derived from
    ``epoch_seed`` (an int or a sequence of ints).
    """
    if batch_size < 2 or batch_size % 2:
        raise ConfigError(f"batch_size must be even and >= 2, got {batch_size}")
    half = batch_size // 2
    n_batches = -(-max(source_len, target_len) // half)
    seed = list(epoch_seed) if isinstance(epoch_seed, Sequence) else [epoch_seed]
    src_idx = _index_stream(source_len, n_batches * half, make_rng(seed + [0]))
    tgt_idx = _index_stream(target_len, n_batches * half, make_rng(seed + [1]))
    return [
        (src_idx[b * half:(b + 1) * half], tgt_idx[b * half:(b + 1) * half])
        for b in range(n_batches)
    ]


def batch_iter(source: Dataset, target: Dataset, batch_size: int, epoch_seed) -> Iterator[Batch]:
    """One epoch of balanced batches, ``batch_size // 2`` samples per domain."""
    if not source.labeled:
        raise DataError("source dataset must be labeled")
    for s, t in batch_indices(len(source), len(target), batch_size, epoch_seed):
        yield Batch(source.features[s], source.labels[s], target.features[t])
