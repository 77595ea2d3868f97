"""Layers, initialization, SGD with momentum, and checkpoint I/O.

Random streams come from numpy's PCG64 bit generator
(``np.random.Generator(np.random.PCG64(seed))``), which is the pinned
algorithm for every seeded draw in this package.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ConfigError, ContractError, DataError, DimensionError


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for ``seed`` (an int or a sequence of ints)."""
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class LinearParams:
    """Affine map ``x @ weight + bias``.

    Fields hold plain arrays for storage, or Tensors once bound to a tape.
    """

    weight: np.ndarray | Tensor
    bias: np.ndarray | Tensor

    @property
    def in_dim(self) -> int:
        return self.weight.shape[0]

    @property
    def out_dim(self) -> int:
        return self.weight.shape[1]


@dataclass
class MlpParams:
    """Affine layers with relu between them and nothing after the last."""

    layers: list[LinearParams]

    def __post_init__(self):
        if not self.layers:
            raise ConfigError("an MLP needs at least one layer")
        for i, (a, b) in enumerate(zip(self.layers, self.layers[1:])):
            if a.out_dim != b.in_dim:
                raise DimensionError(
                    f"layer {i} outputs {a.out_dim} but layer {i + 1} expects {b.in_dim}"
                )

    @property
    def in_dim(self) -> int:
        return self.layers[0].in_dim

    @property
    def out_dim(self) -> int:
        return self.layers[-1].out_dim


def init_linear(in_dim: int, out_dim: int, rng: np.random.Generator, scale: float = 1.0) -> LinearParams:
    """Uniform Xavier init: weights in +-sqrt(6/(in+out)), scaled by ``scale``; zero bias.

    Consumes exactly ``in_dim * out_dim`` uniform draws in row-major order.
    """
    if in_dim < 1 or out_dim < 1:
        raise ConfigError(f"layer dimensions must be >= 1, got {in_dim}x{out_dim}")
    bound = math.sqrt(6.0 / (in_dim + out_dim))
    weight = rng.uniform(-bound, bound, size=(in_dim, out_dim))
    if scale != 1.0:
        weight = weight * scale
    return LinearParams(weight, np.zeros((1, out_dim)))


def init_mlp(dims, rng: np.random.Generator, scale: float = 1.0) -> MlpParams:
    dims = list(dims)
    if len(dims) < 2:
        raise ConfigError(f"MLP needs at least input and output dims, got {dims}")
    return MlpParams([init_linear(i, o, rng, scale) for i, o in zip(dims, dims[1:])])


def linear_forward(p: LinearParams, x: Tensor) -> Tensor:
    if x.cols != p.in_dim:
        raise DimensionError(f"input has {x.cols} columns, layer expects {p.in_dim}")
    return ad.add_broadcast_row(ad.matmul(x, p.weight), p.bias)


def mlp_forward(params: MlpParams, x: Tensor) -> Tensor:
    h = x
    last = len(params.layers) - 1
    for i, layer in enumerate(params.layers):
        h = linear_forward(layer, h)
        if i < last:
            h = ad.relu(h)
    return h


@dataclass
class OptimizerState:
    """SGD-with-momentum state. ``velocity`` is keyed by parameter path."""

    learning_rate: float
    momentum: float = 0.9
    velocity: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ConfigError(f"learning rate must be positive, got {self.learning_rate}")
        if not 0.0 <= self.momentum < 1.0:
            raise ConfigError(f"momentum must be in [0, 1), got {self.momentum}")


def sgd_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: OptimizerState):
    """One momentum step, in place, in the insertion order of ``grads``.

    ``v <- momentum * v + g`` then ``theta <- theta - lr * v``. Parameters
    without an entry in ``grads`` are left untouched.
    """
    lr, m = state.learning_rate, state.momentum
    for path, g in grads.items():
        if path not in params:
            raise ContractError(f"gradient for unknown parameter {path!r}")
        theta = params[path]
        if g.shape != theta.shape:
            raise ContractError(f"{path}: gradient shape {g.shape} != parameter shape {theta.shape}")
        v = state.velocity.get(path)
        if v is None:
            v = np.zeros_like(theta)
        v = m * v + g
        state.velocity[path] = v
        theta -= lr * v
    return params


def lr_schedule(base_lr: float, progress: float) -> float:
    """Annealed rate ``base_lr / (1 + 10 p) ** 0.75`` with ``p`` clamped to [0, 1]."""
    p = min(max(float(progress), 0.0), 1.0)
    return base_lr / (1.0 + 10.0 * p) ** 0.75


# Checkpoint container: a JSON object
#   {"format": "gvbridge-checkpoint", "version": 1,
#    "params": {path: {"shape": [rows, cols], "values": [row-major floats]}}}
# Floats are written with Python's shortest round-trip repr, so loading
# reproduces every float64 bit for bit.
CHECKPOINT_FORMAT = "gvbridge-checkpoint"


def save_checkpoint(path, params: dict[str, np.ndarray], meta: dict | None = None) -> None:
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": 1,
        "meta": meta or {},
        "params": {
            k: {"shape": list(v.shape), "values": [float(x) for x in v.ravel()]}
            for k, v in params.items()
        },
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise DataError(f"{path}: not a gvbridge checkpoint")
    params = {}
    for k, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        values = np.array(entry["values"], dtype=np.float64)
        if values.size != math.prod(shape):
            raise DataError(f"{path}: {k} has {values.size} values for shape {shape}")
        params[k] = values.reshape(shape)
    return params, doc.get("meta", {})
