"""Post-hoc analysis: bridge range vs. errors, seed aggregation, feature export."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import spearmanr

from .data import Dataset
from .errors import DataError
from .gvb import ABLATION_VARIANTS, VARIANT_NAMES, GvbModel, Variant, predict

NUM_BUCKETS = 10


@dataclass
class Bucket:
    lo: float
    hi: float
    count: int
    errors: int

    @property
    def error_rate(self) -> float:
        return self.errors / self.count


@dataclass
class BridgeStatsReport:
    """Error rates over quantile buckets of the per-sample bridge range.

    ``key`` says which bridge sorted the samples ("gamma" or "sigma").
    Means over an empty split are None.
    """

    key: str
    order: list[int]
    values: list[float]
    buckets: list[Bucket]
    mean_correct: float | None
    mean_misclassified: float | None
    mean_sigma_correct: float | None
    mean_sigma_misclassified: float | None
    rank_correlation: float
    num_samples: int
    num_errors: int
    few_samples: bool = False

    def to_dict(self) -> dict:
        d = asdict(self)
        for b, src in zip(d["buckets"], self.buckets):
            b["error_rate"] = src.error_rate
        return d

    def to_text(self) -> str:
        def fmt(x):
            return "absent" if x is None else f"{x:.6g}"

        lines = [
            f"bridge range by |{self.key}|: {self.num_samples} samples, {self.num_errors} misclassified",
            f"mean |{self.key}|  correct {fmt(self.mean_correct)}  misclassified {fmt(self.mean_misclassified)}",
            f"rank correlation (range vs error): {self.rank_correlation:+.4f}",
        ]
        if self.few_samples:
            lines.append("warning: fewer than 10 samples, single bucket")
        lines.append(f"{'bucket':>6} {'lo':>12} {'hi':>12} {'n':>6} {'err':>6} {'rate':>7}")
        for i, b in enumerate(self.buckets):
            lines.append(f"{i:>6} {b.lo:>12.4e} {b.hi:>12.4e} {b.count:>6} {b.errors:>6} {b.error_rate:>7.3f}")
        return "\n".join(lines) + "\n"


def _mean_or_none(x: np.ndarray) -> float | None:
    return float(x.mean()) if x.size else None


def bridge_stats(records: Sequence, key: str = "gamma") -> BridgeStatsReport:
    """Summarize how misclassification varies with bridge range.

    ``records`` are :class:`~gvbridge.trainer.SampleRecord`-like objects with
    ``gamma_range``, ``sigma_range`` and ``correct``. Samples are sorted by
    range, ties broken by position in ``records``, then split into ten
    near-equal buckets (one bucket if fewer than ten samples).
    """
    if key not in ("gamma", "sigma"):
        raise ValueError(f"key must be 'gamma' or 'sigma', got {key!r}")
    if not records:
        raise DataError("no records to summarize")
    if any(r.correct is None for r in records):
        raise DataError("bridge statistics need labeled samples")
    gamma = np.array([r.gamma_range for r in records], dtype=np.float64)
    sigma = np.array([r.sigma_range for r in records], dtype=np.float64)
    wrong = np.array([not r.correct for r in records])
    vals = gamma if key == "gamma" else sigma

    order = np.lexsort((np.arange(vals.size), vals))
    few = vals.size < NUM_BUCKETS
    buckets = []
    for chunk in np.array_split(order, 1 if few else NUM_BUCKETS):
        buckets.append(
            Bucket(float(vals[chunk].min()), float(vals[chunk].max()), int(chunk.size), int(wrong[chunk].sum()))
        )

    if np.all(vals == vals[0]) or np.all(wrong == wrong[0]):
        rho = 0.0
    else:
        rho = float(spearmanr(vals, wrong.astype(np.float64))[0])

    return BridgeStatsReport(
        key=key,
        order=[int(i) for i in order],
        values=[float(v) for v in vals[order]],
        buckets=buckets,
        mean_correct=_mean_or_none(vals[~wrong]),
        mean_misclassified=_mean_or_none(vals[wrong]),
        mean_sigma_correct=_mean_or_none(sigma[~wrong]),
        mean_sigma_misclassified=_mean_or_none(sigma[wrong]),
        rank_correlation=rho,
        num_samples=int(vals.size),
        num_errors=int(wrong.sum()),
        few_samples=few,
    )


@dataclass
class RunResult:
    variant: str
    seed: int
    acc_target: float | None
    error: str | None = None


@dataclass
class AblationRow:
    variant: str
    accuracies: dict[int, float]
    mean: float
    std: float

    @property
    def n(self) -> int:
        return len(self.accuracies)


@dataclass
class AblationReport:
    """Per-variant mean and population std of final target accuracy."""

    rows: list[AblationRow]
    failures: list[RunResult] = field(default_factory=list)
    std_kind: str = "population"

    def row(self, variant: str) -> AblationRow:
        for r in self.rows:
            if r.variant == variant:
                return r
        raise KeyError(variant)

    def to_dict(self) -> dict:
        return {
            "std": self.std_kind,
            "rows": [
                {
                    "variant": r.variant,
                    "n": r.n,
                    "mean": r.mean,
                    "std": r.std,
                    "accuracies": {str(k): v for k, v in r.accuracies.items()},
                }
                for r in self.rows
            ],
            "failures": [asdict(f) for f in self.failures],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def to_text(self) -> str:
        lines = [f"{'variant':<12} {'n':>3} {'mean':>8} {'std':>8}   (population std)"]
        for r in self.rows:
            lines.append(f"{r.variant:<12} {r.n:>3} {100 * r.mean:>7.2f}% {100 * r.std:>7.2f}%")
        for f in self.failures:
            lines.append(f"FAILED {f.variant} seed {f.seed}: {f.error}")
        return "\n".join(lines) + "\n"


def _variant_rank(name: str):
    if name in ABLATION_VARIANTS:
        return (0, ABLATION_VARIANTS.index(name), name)
    if name in VARIANT_NAMES:
        return (1, VARIANT_NAMES.index(name), name)
    return (2, 0, name)


def aggregate_seeds(runs: Iterable[RunResult]) -> AblationReport:
    """Group finished runs by variant; failed runs are listed, not averaged.

    Sums use :func:`math.fsum`, so the report does not depend on run order.
    """
    by_variant: dict[str, dict[int, float]] = {}
    failures = []
    for run in runs:
        if run.error is not None or run.acc_target is None:
            failures.append(run)
            continue
        by_variant.setdefault(run.variant, {})[run.seed] = float(run.acc_target)
    rows = []
    for name in sorted(by_variant, key=_variant_rank):
        accs = dict(sorted(by_variant[name].items()))
        vals = list(accs.values())
        mean = math.fsum(vals) / len(vals)
        std = math.sqrt(math.fsum((v - mean) ** 2 for v in vals) / len(vals))
        rows.append(AblationRow(name, accs, mean, std))
    failures.sort(key=lambda f: (_variant_rank(f.variant), f.seed))
    return AblationReport(rows, failures)


FEATURE_COLUMNS_PREFIX = ("domain", "label")


def feature_header(num_classes: int) -> list[str]:
    return [*FEATURE_COLUMNS_PREFIX, *(f"r{j}" for j in range(num_classes)), "gamma_range", "sigma_range"]


def export_features(model: GvbModel, datasets: Sequence[Dataset], variant: Variant, path) -> int:
    """Write one CSV row per sample: domain, label (-1 if unknown), r, |gamma|, |sigma|.

    ``gamma_range`` is the mean absolute bridge entry ``|gamma|_1 / C``;
    floats are written with round-trip precision. Returns the number of
    data rows written.
    """
    c = model.num_classes
    n = 0
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(feature_header(c))
        for ds in datasets:
            out = predict(model, ds.features, variant)
            r = out.r.value
            g = np.abs(out.gamma.value).sum(axis=1) / c
            s = np.abs(out.sigma.value[:, 0])
            for i in range(len(ds)):
                label = int(ds.labels[i]) if ds.labels is not None else -1
                w.writerow(
                    [ds.domain.value, label, *(repr(float(v)) for v in r[i]), repr(float(g[i])), repr(float(s[i]))]
                )
                n += 1
    return n


def read_features(path) -> dict[str, np.ndarray]:
    """Load a feature table back into arrays keyed by ``domain``, ``label``, ``r``, ..."""
    with Path(path).open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    rcols = [i for i, h in enumerate(header) if h.startswith("r") and h[1:].isdigit()]
    return {
        "domain": np.array([row[0] for row in body]),
        "label": np.array([int(row[1]) for row in body], dtype=np.int64),
        "r": np.array([[float(row[i]) for i in rcols] for row in body], dtype=np.float64).reshape(len(body), len(rcols)),
        "gamma_range": np.array([float(row[header.index("gamma_range")]) for row in body]),
        "sigma_range": np.array([float(row[header.index("sigma_range")]) for row in body]),
    }
