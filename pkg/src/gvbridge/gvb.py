"""Generator and discriminator with penalized bridge layers.

The generator maps inputs ``x`` to classifier responses ``c = g2(g1(x))`` and
a bridge ``gamma = g3(g1(x))``; the domain-invariant representation is
``r = c - gamma``. The discriminator scores ``r`` with ``d1(r) + d2(r)``,
where ``d2`` is its bridge. L1 penalties on both bridges shrink them over
training.

Variants switch the bridges and their penalties on and off:

=============  ========  ========  ======  ======
name           g-bridge  d-bridge  lambda  mu
=============  ========  ========  ======  ======
baseline       off       off       0       0
bg             on        off       0       0
bd             off       on        0       0
gvb-g          on        off       λ       0
gvb-d          off       on        0       µ
gvb-gd         on        on        λ       µ
gvbg-bd        on        on        λ       0
source-only    off       off       0       0   (no adversarial gradient)
=============  ========  ========  ======  ======
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape, Tensor
from .errors import ConfigError, DataError, DimensionError
from .nn import LinearParams, MlpParams, init_linear, init_mlp, linear_forward, mlp_forward


class VariantTag(enum.Enum):
    Baseline = "baseline"
    BG = "bg"
    BD = "bd"
    GVB_G = "gvb-g"
    GVB_D = "gvb-d"
    GVB_GD = "gvb-gd"
    GVBG_plus_BD = "gvbg-bd"
    SourceOnly = "source-only"


# (use_g_bridge, use_d_bridge, lambda active, mu active)
_VARIANT_TABLE = {
    VariantTag.Baseline: (False, False, False, False),
    VariantTag.BG: (True, False, False, False),
    VariantTag.BD: (False, True, False, False),
    VariantTag.GVB_G: (True, False, True, False),
    VariantTag.GVB_D: (False, True, False, True),
    VariantTag.GVB_GD: (True, True, True, True),
    VariantTag.GVBG_plus_BD: (True, True, True, False),
    VariantTag.SourceOnly: (False, False, False, False),
}

VARIANT_NAMES = tuple(t.value for t in VariantTag)

# Row order of the ablation table.
ABLATION_VARIANTS = ("baseline", "bg", "gvb-g", "bd", "gvb-d", "gvbg-bd", "gvb-gd")


@dataclass(frozen=True)
class Variant:
    tag: VariantTag
    lam: float
    mu: float
    use_g_bridge: bool
    use_d_bridge: bool

    @classmethod
    def from_name(cls, name: str, lam: float = 1.0, mu: float = 1.0) -> "Variant":
        """Build a variant; penalties the variant does not use are forced to 0."""
        try:
            tag = VariantTag(name.strip().lower())
        except ValueError:
            raise ConfigError(
                f"unknown variant {name!r}; expected one of {', '.join(VARIANT_NAMES)}"
            ) from None
        if lam < 0 or mu < 0:
            raise ConfigError(f"lambda and mu must be >= 0, got {lam}, {mu}")
        g, d, lam_on, mu_on = _VARIANT_TABLE[tag]
        return cls(tag, float(lam) if lam_on else 0.0, float(mu) if mu_on else 0.0, g, d)

    @property
    def name(self) -> str:
        return self.tag.value

    @property
    def adversarial(self) -> bool:
        return self.tag is not VariantTag.SourceOnly


@dataclass
class GvbModel:
    g1: MlpParams
    g2: LinearParams
    g3: MlpParams
    d1: MlpParams
    d2: MlpParams
    num_classes: int

    def __post_init__(self):
        c = self.num_classes
        if self.g2.in_dim != self.g1.out_dim or self.g3.in_dim != self.g1.out_dim:
            raise DimensionError("g2 and g3 must take the g1 feature dimension")
        if self.g2.out_dim != c or self.g3.out_dim != c:
            raise DimensionError(f"g2 and g3 must output {c} columns")
        for name, d in (("d1", self.d1), ("d2", self.d2)):
            if d.in_dim != c or d.out_dim != 1:
                raise DimensionError(f"{name} must map {c} columns to 1")

    @property
    def input_dim(self) -> int:
        return self.g1.in_dim

    def named_parameters(self) -> dict[str, np.ndarray | Tensor]:
        """Parameters keyed by path, e.g. ``g1.layer0.weight``, in a fixed order."""
        out = {}
        for name in ("g1", "g2", "g3", "d1", "d2"):
            part = getattr(self, name)
            if isinstance(part, MlpParams):
                for i, layer in enumerate(part.layers):
                    out[f"{name}.layer{i}.weight"] = layer.weight
                    out[f"{name}.layer{i}.bias"] = layer.bias
            else:
                out[f"{name}.weight"] = part.weight
                out[f"{name}.bias"] = part.bias
        return out

    def map_parameters(self, fn: Callable[[str, np.ndarray], object]) -> "GvbModel":
        """A structurally identical model with ``fn(path, value)`` in every slot."""

        def lin(prefix, p):
            return LinearParams(fn(f"{prefix}.weight", p.weight), fn(f"{prefix}.bias", p.bias))

        def mlp(prefix, m):
            return MlpParams([lin(f"{prefix}.layer{i}", l) for i, l in enumerate(m.layers)])

        return GvbModel(
            g1=mlp("g1", self.g1),
            g2=lin("g2", self.g2),
            g3=mlp("g3", self.g3),
            d1=mlp("d1", self.d1),
            d2=mlp("d2", self.d2),
            num_classes=self.num_classes,
        )

    def copy(self) -> "GvbModel":
        return self.map_parameters(lambda _, v: np.array(v, copy=True))

    def load_parameters(self, params: dict[str, np.ndarray]) -> "GvbModel":
        """Copy of this model with values taken from ``params`` (shapes must match)."""

        def take(path, v):
            if path not in params:
                raise DataError(f"missing parameter {path!r}")
            new = np.asarray(params[path], dtype=np.float64)
            if new.shape != v.shape:
                raise DimensionError(f"{path}: shape {new.shape} != {v.shape}")
            return new.copy()

        return self.map_parameters(take)

    def bind(self, tape: Tape, trainable: Callable[[str], bool] | None = None):
        """Put parameters on ``tape``.

        Returns ``(bound_model, leaves)``; ``leaves`` maps path to the leaf
        Tensor for every trainable parameter. Parameters rejected by
        ``trainable`` enter the graph as constants.
        """
        leaves: dict[str, Tensor] = {}

        def watch(path, v):
            if trainable is not None and not trainable(path):
                return Tensor(v)
            t = tape.watch(v)
            leaves[path] = t
            return t

        return self.map_parameters(watch), leaves


def init_model(
    input_dim: int,
    num_classes: int,
    rng: np.random.Generator,
    g_hidden: Sequence[int] = (32,),
    feat_dim: int = 16,
    d_hidden: Sequence[int] = (32,),
    bridge_scale: float = 0.1,
    g3_hidden: Sequence[int] = (),
) -> GvbModel:
    """Initialize all five networks in the fixed order g1, g2, g3, d1, d2.

    Every network is drawn regardless of variant so that equal seeds give
    equal shared parameters across variants. Bridges start at
    ``bridge_scale`` times the usual init bound.
    """
    if num_classes < 2:
        raise ConfigError(f"need at least 2 classes, got {num_classes}")
    g1 = init_mlp([input_dim, *g_hidden, feat_dim], rng)
    g2 = init_linear(feat_dim, num_classes, rng)
    g3 = init_mlp([feat_dim, *g3_hidden, num_classes], rng, scale=bridge_scale)
    d1 = init_mlp([num_classes, *d_hidden, 1], rng)
    d2 = init_mlp([num_classes, *d_hidden, 1], rng, scale=bridge_scale)
    return GvbModel(g1, g2, g3, d1, d2, num_classes)


@dataclass
class ForwardOutputs:
    c: Tensor
    gamma: Tensor
    r: Tensor
    d_total: Tensor
    sigma: Tensor


def generator_forward(model: GvbModel, x: Tensor, variant: Variant):
    """Return ``(c, gamma, r)`` with ``r = c - gamma``; gamma is zero without a g-bridge."""
    if x.cols != model.input_dim:
        raise DimensionError(f"input has {x.cols} columns, model expects {model.input_dim}")
    f = mlp_forward(model.g1, x)
    c = linear_forward(model.g2, f)
    if variant.use_g_bridge:
        gamma = mlp_forward(model.g3, f)
    else:
        gamma = Tensor(np.zeros(c.shape))
    return c, gamma, ad.sub(c, gamma)


def discriminator_forward(model: GvbModel, r_reversed: Tensor, variant: Variant):
    """Return ``(d_total, sigma_raw)``.

    ``d_total = sigmoid(d1(r) + d2(r))`` with the d-bridge, ``sigmoid(d1(r))``
    without. ``sigma_raw`` is the pre-sigmoid bridge score (zeros if off).
    """
    if r_reversed.cols != model.num_classes:
        raise DimensionError(
            f"discriminator input has {r_reversed.cols} columns, expected {model.num_classes}"
        )
    score = mlp_forward(model.d1, r_reversed)
    if variant.use_d_bridge:
        sigma = mlp_forward(model.d2, r_reversed)
        score = ad.add(score, sigma)
    else:
        sigma = Tensor(np.zeros(score.shape))
    return ad.sigmoid(score), sigma


def _labels_array(labels, num_classes: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.ndim != 1:
        raise DataError(f"labels must be a flat sequence, got shape {y.shape}")
    if y.size and not np.issubdtype(y.dtype, np.integer):
        raise DataError("labels must be integers")
    bad = np.flatnonzero((y < 0) | (y >= num_classes))
    if bad.size:
        i = int(bad[0])
        raise DataError(f"label {y[i]} at position {i} is outside [0, {num_classes})")
    return y.astype(np.int64)


def classification_loss(logits: Tensor, labels) -> Tensor:
    """Mean cross-entropy ``-log softmax(row)[label]`` over the batch."""
    n, c = logits.shape
    y = _labels_array(labels, c)
    if y.size != n:
        raise DataError(f"{y.size} labels for {n} rows")
    onehot = np.zeros((n, c))
    onehot[np.arange(n), y] = 1.0
    picked = ad.sum(ad.mul(ad.log_softmax_rows(logits), Tensor(onehot)))
    return ad.scale(picked, -1.0 / n)


def _weights(w, n: int, name: str) -> np.ndarray:
    if w is None:
        return np.ones((n, 1))
    arr = w.value if isinstance(w, Tensor) else np.asarray(w, dtype=np.float64).reshape(-1, 1)
    if arr.shape != (n, 1):
        raise DimensionError(f"{name}: weights shape {arr.shape} does not match {n} samples")
    if np.any(arr < 0):
        raise DataError(f"{name}: weights must be nonnegative")
    total = arr.sum()
    # a NaN sum passes through so the caller sees a non-finite loss
    if total <= 0:
        raise DataError(f"{name}: weights sum to zero")
    return arr


def adversarial_loss(d_source: Tensor, d_target: Tensor, weights_s=None, weights_t=None) -> Tensor:
    """``-sum w log d_s / sum w  -  sum w log(1 - d_t) / sum w``.

    Unit weights (the default) give the plain two-domain log loss.
    """
    ws = _weights(weights_s, d_source.rows, "source")
    wt = _weights(weights_t, d_target.rows, "target")
    if d_source.cols != 1 or d_target.cols != 1:
        raise DimensionError("discriminator outputs must be single-column")
    src = ad.sum(ad.mul(ad.log(d_source), Tensor(ws / ws.sum())))
    tgt = ad.sum(ad.mul(ad.log(1.0 - d_target), Tensor(wt / wt.sum())))
    return ad.scale(ad.add(src, tgt), -1.0)


def bridge_loss_g(gamma_source: Tensor, gamma_target: Tensor) -> Tensor:
    """Mean absolute bridge entry over both domains: ``sum |gamma| / ((Ns + Nt) C)``."""
    if gamma_source.cols != gamma_target.cols:
        raise DimensionError(
            f"bridge widths differ: {gamma_source.cols} vs {gamma_target.cols}"
        )
    n = gamma_source.rows + gamma_target.rows
    total = ad.add(ad.sum(ad.abs(gamma_source)), ad.sum(ad.abs(gamma_target)))
    return ad.scale(total, 1.0 / (n * gamma_source.cols))


def bridge_loss_d(sigma_source: Tensor, sigma_target: Tensor) -> Tensor:
    """``sum |sigma| / (Ns + Nt)`` over single-column bridge scores."""
    if sigma_source.cols != 1 or sigma_target.cols != 1:
        raise DimensionError("discriminator bridge scores must be single-column")
    n = sigma_source.rows + sigma_target.rows
    total = ad.add(ad.sum(ad.abs(sigma_source)), ad.sum(ad.abs(sigma_target)))
    return ad.scale(total, 1.0 / n)


def entropy_weights(c) -> Tensor:
    """Per-row ``1 + exp(-H(softmax(c)))``, as a constant (n x 1) tensor in (1, 2]."""
    logits = c.value if isinstance(c, Tensor) else np.asarray(c, dtype=np.float64)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    p = np.exp(logp)
    h = -(p * logp).sum(axis=1, keepdims=True)
    return Tensor(1.0 + np.exp(-h))


@dataclass
class StepLosses:
    """Scalar loss tensors of one step plus the forward outputs per domain."""

    l_cls: Tensor
    l_adv: Tensor
    l_g: Tensor
    l_d: Tensor
    total: Tensor
    source: ForwardOutputs
    target: ForwardOutputs

    def values(self) -> dict[str, float]:
        return {
            "l_cls": self.l_cls.item(),
            "l_adv": self.l_adv.item(),
            "l_g": self.l_g.item(),
            "l_d": self.l_d.item(),
            "total": self.total.item(),
        }


def _as_input(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def total_step_losses(model: GvbModel, batch, variant: Variant, alpha: float, weights=None) -> StepLosses:
    """Assemble the full objective for one batch.

    ``total = L_cls + L_adv + lambda L_G + mu L_D``. One backward pass on
    ``total`` gives every parameter its update direction: the gradient
    reversal on ``r`` makes the generator ascend ``L_adv`` while the
    discriminator descends it, and ``L_D`` is evaluated on a detached ``r``
    so its gradient reaches only the discriminator bridge.

    ``batch`` needs ``xs``, ``ys`` and ``xt``; ``model`` may be bound to a tape.
    ``weights`` overrides the (source, target) entropy weights, which are
    otherwise computed from the classifier responses of this pass.
    """
    if not variant.adversarial:
        alpha = 0.0
    xs, xt = _as_input(batch.xs), _as_input(batch.xt)
    c_s, gamma_s, r_s = generator_forward(model, xs, variant)
    c_t, gamma_t, r_t = generator_forward(model, xt, variant)

    l_cls = classification_loss(r_s, batch.ys)

    d_s, sigma_s = discriminator_forward(model, ad.grad_reverse(r_s, alpha), variant)
    d_t, sigma_t = discriminator_forward(model, ad.grad_reverse(r_t, alpha), variant)
    if weights is None:
        weights = (entropy_weights(c_s), entropy_weights(c_t))
    l_adv = adversarial_loss(d_s, d_t, *weights)

    if variant.use_g_bridge:
        l_g = bridge_loss_g(gamma_s, gamma_t)
    else:
        l_g = Tensor([[0.0]])
    if variant.use_d_bridge:
        l_d = bridge_loss_d(
            mlp_forward(model.d2, ad.detach(r_s)), mlp_forward(model.d2, ad.detach(r_t))
        )
    else:
        l_d = Tensor([[0.0]])

    total = ad.add(ad.add(l_cls, l_adv), ad.add(ad.scale(l_g, variant.lam), ad.scale(l_d, variant.mu)))
    return StepLosses(
        l_cls,
        l_adv,
        l_g,
        l_d,
        total,
        ForwardOutputs(c_s, gamma_s, r_s, d_s, sigma_s),
        ForwardOutputs(c_t, gamma_t, r_t, d_t, sigma_t),
    )


def predict(model: GvbModel, x, variant: Variant) -> ForwardOutputs:
    """Untracked forward pass over ``x`` (no gradient reversal needed)."""
    c, gamma, r = generator_forward(model, _as_input(x), variant)
    d, sigma = discriminator_forward(model, r, variant)
    return ForwardOutputs(c, gamma, r, d, sigma)


def with_zero_bridges(model: GvbModel) -> GvbModel:
    """Copy of ``model`` with g3 and d2 parameters set to zero."""
    return model.map_parameters(
        lambda path, v: np.zeros_like(v) if path.startswith(("g3.", "d2.")) else np.array(v, copy=True)
    )


__all__ = [
    "ABLATION_VARIANTS",
    "VARIANT_NAMES",
    "ForwardOutputs",
    "GvbModel",
    "StepLosses",
    "Variant",
    "VariantTag",
    "adversarial_loss",
    "bridge_loss_d",
    "bridge_loss_g",
    "classification_loss",
    "discriminator_forward",
    "entropy_weights",
    "generator_forward",
    "init_model",
    "predict",
    "total_step_losses",
    "with_zero_bridges",
]
