"""Central finite-difference checks for tape gradients.

For the assembled min-max objective the reference is the finite difference
of each player's own scalar objective. With the gradient reversal factor
``alpha``, the generator parameters (g1, g2, g3) descend

    L_cls - alpha * L_adv + lambda * L_G

and the discriminator parameters (d1, d2) descend

    L_adv + mu * L_D

which is exactly what one backward pass through the reversal delivers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .autodiff import Tape
from .data import Batch
from .gvb import GvbModel, Variant, entropy_weights, init_model, total_step_losses
from .nn import make_rng

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = DEFAULT_STEP) -> np.ndarray:
    """Central differences of ``f()`` w.r.t. every entry of ``x`` (perturbed in place)."""
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2.0 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-8) -> float:
    """``max|a - n| / max(max|a|, max|n|, floor)`` over a whole tensor."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


@dataclass
class GradcheckReport:
    errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = DEFAULT_TOLERANCE

    @property
    def worst(self) -> float:
        return max(self.errors.values(), default=0.0)

    @property
    def worst_param(self) -> str | None:
        return max(self.errors, key=self.errors.get) if self.errors else None

    @property
    def offending(self) -> list[str]:
        return [k for k, v in self.errors.items() if not v <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.offending


def player_objectives(model: GvbModel, batch, variant: Variant, alpha: float, weights=None) -> tuple[float, float]:
    """(generator objective, discriminator objective) evaluated without a tape.

    Pass the entropy weights of the unperturbed model as ``weights``: the
    tape treats them as constants, so the reference must too.
    """
    v = total_step_losses(model, batch, variant, alpha, weights).values()
    gen = v["l_cls"] - alpha * v["l_adv"] + variant.lam * v["l_g"]
    disc = v["l_adv"] + variant.mu * v["l_d"]
    return gen, disc


def tape_gradients(model: GvbModel, batch, variant: Variant, alpha: float) -> dict[str, np.ndarray]:
    tape = Tape()
    bound, leaves = model.bind(tape)
    losses = total_step_losses(bound, batch, variant, alpha)
    tape.backward(losses.total)
    return {path: tape.grad(t) for path, t in leaves.items()}


def check_gvb_gradients(
    model: GvbModel,
    batch,
    variant: Variant,
    alpha: float,
    h: float = DEFAULT_STEP,
    tolerance: float = DEFAULT_TOLERANCE,
    corrupt: str | None = None,
) -> GradcheckReport:
    """Compare every tape gradient with finite differences of its player's objective.

    ``corrupt`` names a parameter whose analytic gradient is deliberately
    perturbed, as a negative control.
    """
    analytic = tape_gradients(model, batch, variant, alpha)
    if corrupt is not None:
        if corrupt not in analytic:
            raise KeyError(f"no parameter named {corrupt!r}")
        analytic[corrupt] = analytic[corrupt] + 1e-2 * (1.0 + np.abs(analytic[corrupt]))
    params = model.named_parameters()
    base = total_step_losses(model, batch, variant, alpha)
    weights = (entropy_weights(base.source.c), entropy_weights(base.target.c))
    report = GradcheckReport(tolerance=tolerance)
    for path, g in analytic.items():
        player = 0 if path.startswith("g") else 1
        numeric = numerical_gradient(
            lambda: player_objectives(model, batch, variant, alpha, weights)[player], params[path], h
        )
        report.errors[path] = relative_error(g, numeric)
    return report


def _hidden_inputs(mlp, x: np.ndarray):
    """Yield the pre-activation of every relu in ``mlp`` and its final output."""
    h = x
    for i, layer in enumerate(mlp.layers):
        z = h @ layer.weight + layer.bias
        if i < len(mlp.layers) - 1:
            yield z
            h = np.maximum(z, 0.0)
    yield z


def kink_distance(model: GvbModel, batch) -> float:
    """Smallest distance of any relu or bridge |.| input to its kink on ``batch``."""
    dist = np.inf
    for x in (batch.xs, batch.xt):
        *g1_hidden, f = _hidden_inputs(model.g1, x)
        *g3_hidden, gamma = _hidden_inputs(model.g3, f)
        c = f @ model.g2.weight + model.g2.bias
        r = c - gamma
        *d1_hidden, _ = _hidden_inputs(model.d1, r)
        *d2_hidden, sigma = _hidden_inputs(model.d2, r)
        for z in (*g1_hidden, *g3_hidden, *d1_hidden, *d2_hidden, gamma, sigma):
            dist = min(dist, float(np.abs(z).min()))
    return dist


def tiny_problem(seed: int = 0, input_dim: int = 2, hidden: int = 4, num_classes: int = 3, batch_size: int = 4):
    """A small GVB-GD model with a fixed batch, for gradient checking.

    Bridges use the full init scale, and the draw is repeated until no relu
    or absolute-value input lies within 1e-3 of its kink, where central
    differences are meaningless.
    """
    rng = make_rng([seed, 7])
    half = batch_size // 2
    while True:
        model = init_model(
            input_dim, num_classes, rng, g_hidden=(hidden,), feat_dim=hidden, d_hidden=(hidden,), bridge_scale=1.0
        )
        batch = Batch(
            xs=rng.standard_normal((half, input_dim)),
            ys=rng.integers(0, num_classes, size=half),
            xt=rng.standard_normal((half, input_dim)),
        )
        if kink_distance(model, batch) >= 1e-3:
            return model, batch


def run_gradcheck(seed: int = 0, alpha: float = 0.7, corrupt: str | None = None) -> GradcheckReport:
    model, batch = tiny_problem(seed)
    return check_gvb_gradients(model, batch, Variant.from_name("gvb-gd"), alpha, corrupt=corrupt)
