"""Adversarial training loop, evaluation and metrics streams."""

from __future__ import annotations

import csv
import dataclasses
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator

import numpy as np

from .autodiff import Tape
from .data import Batch, Dataset, batch_iter
from .errors import ConfigError, TrainingAborted
from .gvb import GvbModel, Variant, init_model, predict, total_step_losses, with_zero_bridges
from .nn import OptimizerState, lr_schedule, make_rng, save_checkpoint, sgd_step

log = logging.getLogger(__name__)


def grl_alpha(progress: float, grl_gamma: float = 10.0) -> float:
    """Progressive reversal factor ``2 / (1 + exp(-gamma p)) - 1``."""
    return 2.0 / (1.0 + math.exp(-grl_gamma * progress)) - 1.0


@dataclass
class TrainConfig:
    variant: str = "gvb-gd"
    lam: float = 1.0
    mu: float = 1.0
    total_iters: int = 3000
    batch_size: int = 64
    base_lr: float = 0.003
    momentum: float = 0.9
    grl_gamma: float = 10.0
    g_hidden: tuple[int, ...] = (32, 32)
    feat_dim: int = 16
    d_hidden: tuple[int, ...] = (32,)
    bridge_scale: float = 0.1
    g3_hidden: tuple[int, ...] = ()
    seed: int = 0
    eval_every: int = 100
    # Zero g3/d2 at init and never update them.
    frozen_bridges: bool = False
    checkpoint_path: str | None = None
    metrics_path: str | None = None

    def __post_init__(self):
        self.g_hidden = tuple(int(h) for h in self.g_hidden)
        self.d_hidden = tuple(int(h) for h in self.d_hidden)
        self.g3_hidden = tuple(int(h) for h in self.g3_hidden)
        if self.total_iters < 1:
            raise ConfigError(f"total_iters must be >= 1, got {self.total_iters}")
        if self.eval_every < 1:
            raise ConfigError(f"eval_every must be >= 1, got {self.eval_every}")
        if self.batch_size < 2 or self.batch_size % 2:
            raise ConfigError(f"batch_size must be even and >= 2, got {self.batch_size}")
        if not self.base_lr > 0:
            raise ConfigError(f"base_lr must be positive, got {self.base_lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")
        if any(h < 1 for h in (*self.g_hidden, *self.d_hidden, *self.g3_hidden, self.feat_dim)):
            raise ConfigError("hidden and feature dims must be >= 1")
        self.get_variant()

    def get_variant(self) -> Variant:
        return Variant.from_name(self.variant, self.lam, self.mu)


@dataclass
class MetricsRecord:
    iter: int
    l_cls: float
    l_adv: float
    l_g: float
    l_d: float
    alpha: float
    lr: float
    acc_source: float | None
    acc_target: float | None
    mean_abs_gamma_target: float
    mean_abs_sigma_target: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


METRIC_FIELDS = tuple(f.name for f in dataclasses.fields(MetricsRecord))


@dataclass
class SampleRecord:
    """Per-sample evaluation output; ``gamma_range`` is the mean |gamma| entry."""

    index: int
    label: int
    predicted: int
    correct: bool | None
    gamma_range: float
    sigma_range: float


def evaluate(model: GvbModel, dataset: Dataset, variant: Variant):
    """Predict with ``argmax(r)`` (lowest index on ties).

    Returns ``(accuracy, records)``; accuracy is None for unlabeled data.
    """
    out = predict(model, dataset.features, variant)
    pred = np.argmax(out.r.value, axis=1)
    gamma_range = np.abs(out.gamma.value).sum(axis=1) / model.num_classes
    sigma_range = np.abs(out.sigma.value[:, 0])
    labels = dataset.labels
    correct = pred == labels if labels is not None else None
    records = [
        SampleRecord(
            index=i,
            label=int(labels[i]) if labels is not None else -1,
            predicted=int(pred[i]),
            correct=bool(correct[i]) if correct is not None else None,
            gamma_range=float(gamma_range[i]),
            sigma_range=float(sigma_range[i]),
        )
        for i in range(len(dataset))
    ]
    accuracy = float(correct.mean()) if correct is not None else None
    return accuracy, records


class MetricsWriter:
    """Appends records to a JSON-lines file and a CSV mirror with the same columns."""

    def __init__(self, jsonl_path, csv_path=None):
        self.jsonl_path = Path(jsonl_path)
        self.csv_path = Path(csv_path) if csv_path is not None else self.jsonl_path.with_suffix(".csv")
        self.jsonl_path.write_text("")
        with self.csv_path.open("w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(METRIC_FIELDS)

    def __call__(self, record: MetricsRecord) -> None:
        d = record.to_dict()
        with self.jsonl_path.open("a") as fh:
            fh.write(json.dumps(d) + "\n")
        with self.csv_path.open("a", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerow(
                ["" if d[k] is None else repr(d[k]) if isinstance(d[k], float) else d[k] for k in METRIC_FIELDS]
            )


def read_metrics(path) -> list[MetricsRecord]:
    lines = Path(path).read_text().splitlines()
    return [MetricsRecord(**json.loads(line)) for line in lines if line.strip()]


@dataclass
class TrainResult:
    model: GvbModel
    records: list[MetricsRecord] = field(default_factory=list)


def build_model(config: TrainConfig, input_dim: int, num_classes: int) -> GvbModel:
    model = init_model(
        input_dim,
        num_classes,
        make_rng(config.seed),
        g_hidden=config.g_hidden,
        feat_dim=config.feat_dim,
        d_hidden=config.d_hidden,
        bridge_scale=config.bridge_scale,
        g3_hidden=config.g3_hidden,
    )
    return with_zero_bridges(model) if config.frozen_bridges else model


def trainable_filter(config: TrainConfig) -> Callable[[str], bool]:
    """Which parameter paths the optimizer updates for this config."""
    v = config.get_variant()
    skip = []
    if not v.use_g_bridge or config.frozen_bridges:
        skip.append("g3.")
    if not v.use_d_bridge or config.frozen_bridges:
        skip.append("d2.")
    skip = tuple(skip)
    return lambda path: not path.startswith(skip) if skip else True


def _batches(source: Dataset, target: Dataset, batch_size: int, seed: int) -> Iterator[Batch]:
    epoch = 0
    while True:
        yield from batch_iter(source, target, batch_size, [seed, epoch])
        epoch += 1


def snapshot(model: GvbModel, source: Dataset, target: Dataset, variant: Variant, it: int, alpha: float, lr: float) -> MetricsRecord:
    """Losses and accuracies of ``model`` over the full datasets."""
    full = Batch(source.features, source.labels, target.features)
    vals = total_step_losses(model, full, variant, alpha).values()
    acc_s, _ = evaluate(model, source, variant)
    acc_t, recs_t = evaluate(model, target, variant)
    return MetricsRecord(
        iter=it,
        l_cls=vals["l_cls"],
        l_adv=vals["l_adv"],
        l_g=vals["l_g"],
        l_d=vals["l_d"],
        alpha=alpha,
        lr=lr,
        acc_source=acc_s,
        acc_target=acc_t,
        mean_abs_gamma_target=float(np.mean([r.gamma_range for r in recs_t])),
        mean_abs_sigma_target=float(np.mean([r.sigma_range for r in recs_t])),
    )


def train(
    config: TrainConfig,
    source: Dataset,
    target: Dataset,
    on_record: Callable[[MetricsRecord], None] | None = None,
    eval_data: tuple[Dataset, Dataset] | None = None,
) -> TrainResult:
    """Run ``config.total_iters`` simultaneous generator/discriminator SGD steps.

    Each step does one forward pass and one backward pass through the
    gradient reversal, then updates every trainable parameter. A snapshot
    over the full datasets is recorded every ``eval_every`` iterations and
    after the last one, over ``eval_data`` (source, target) when given and
    the training sets otherwise. Target labels, if present, are used only
    for reporting.
    """
    if not source.labeled:
        raise ConfigError("source dataset must be labeled")
    if source.dim != target.dim or source.num_classes != target.num_classes:
        raise ConfigError("source and target must share feature dim and class count")
    variant = config.get_variant()
    model = build_model(config, source.dim, source.num_classes)
    params = model.named_parameters()
    trainable = trainable_filter(config)
    state = OptimizerState(config.base_lr, config.momentum)
    writer = MetricsWriter(config.metrics_path) if config.metrics_path else None
    result = TrainResult(model)
    batches = _batches(source, target, config.batch_size, config.seed)
    eval_source, eval_target = eval_data if eval_data is not None else (source, target)

    for it in range(1, config.total_iters + 1):
        progress = it / config.total_iters
        alpha = grl_alpha(progress, config.grl_gamma) if variant.adversarial else 0.0
        lr = lr_schedule(config.base_lr, progress)
        state.learning_rate = lr

        tape = Tape()
        bound, leaves = model.bind(tape, trainable)
        # overflow shows up as non-finite losses or gradients, reported below
        with np.errstate(over="ignore", invalid="ignore"):
            losses = total_step_losses(bound, next(batches), variant, alpha)
            vals = losses.values()
            if not all(math.isfinite(v) for v in vals.values()):
                diag = {"iter": it, "alpha": alpha, "lr": lr, **vals}
                raise TrainingAborted(f"non-finite loss at iteration {it}: {vals}", diag)
            tape.backward(losses.total)
        # all gradients come from the same forward pass, before any update
        grads = {path: tape.grad(t) for path, t in leaves.items()}
        bad = [path for path, g in grads.items() if not np.all(np.isfinite(g))]
        if bad:
            diag = {"iter": it, "alpha": alpha, "lr": lr, **vals, "non_finite_gradients": bad}
            raise TrainingAborted(f"non-finite gradient at iteration {it} for {', '.join(bad)}", diag)
        sgd_step(params, grads, state)

        if it % config.eval_every == 0 or it == config.total_iters:
            with np.errstate(over="ignore", invalid="ignore"):
                record = snapshot(model, eval_source, eval_target, variant, it, alpha, lr)
            losses_now = [record.l_cls, record.l_adv, record.l_g, record.l_d]
            if not all(math.isfinite(v) for v in losses_now):
                raise TrainingAborted(f"non-finite evaluation loss at iteration {it}", record.to_dict())
            result.records.append(record)
            log.debug("iter %d: %s", it, record)
            if writer is not None:
                writer(record)
            if on_record is not None:
                on_record(record)

    if config.checkpoint_path:
        save_checkpoint(
            config.checkpoint_path,
            model.named_parameters(),
            meta={"variant": variant.name, "num_classes": model.num_classes, "input_dim": model.input_dim},
        )
    return result
