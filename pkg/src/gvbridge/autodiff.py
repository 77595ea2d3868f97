"""Reverse-mode automatic differentiation over dense 2-D float64 tensors.

A :class:`Tape` is created per forward pass. Leaves are registered with
:meth:`Tape.watch`; every operation whose operands live on a tape records a
node holding its operand handles and a vector-Jacobian closure. Tensors that
are not on any tape behave as constants.

    tape = Tape()
    w = tape.watch(np.ones((3, 1)))
    loss = mean(relu(matmul(x, w)))
    tape.backward(loss)
    tape.grad(w)
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, ContractError, DimensionError

LOG_FLOOR = 1e-12

# Largest/smallest doubles strictly inside (0, 1).
_SIGMOID_LO = np.nextafter(0.0, 1.0)
_SIGMOID_HI = np.nextafter(1.0, 0.0)


class Tensor:
    """A rows x cols array of float64 values, optionally tracked on a tape."""

    __slots__ = ("value", "tape", "node_id")

    def __init__(self, value, tape: "Tape | None" = None, node_id: int | None = None):
        arr = np.array(value, dtype=np.float64)
        if arr.ndim != 2:
            raise DimensionError(f"tensor must be 2-D, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DimensionError(f"tensor must have rows >= 1 and cols >= 1, got {arr.shape}")
        self.value = arr
        self.tape = tape
        self.node_id = node_id

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    @property
    def rows(self) -> int:
        return self.value.shape[0]

    @property
    def cols(self) -> int:
        return self.value.shape[1]

    @property
    def grad(self) -> np.ndarray:
        if self.tape is None:
            raise ContractError("constant tensor has no gradient")
        return self.tape.grad(self)

    def item(self) -> float:
        if self.shape != (1, 1):
            raise ContractError(f"item() needs a 1x1 tensor, got {self.shape}")
        return float(self.value[0, 0])

    def numpy(self) -> np.ndarray:
        return self.value

    def __repr__(self):
        tracked = "" if self.tape is None else f", node={self.node_id}"
        return f"Tensor({self.value.tolist()}{tracked})"

    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return sub(self, other)
        return add_scalar(self, -other)

    def __rsub__(self, other):
        return add_scalar(scale(self, -1.0), other)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return scale(self, 1.0 / other)

    def __neg__(self):
        return scale(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


class Tape:
    """Ordered record of operations for one forward pass."""

    def __init__(self):
        self._parents: list[tuple[int | None, ...]] = []
        self._vjps: list[Callable | None] = []
        self._shapes: list[tuple[int, int]] = []
        self._grads: list[np.ndarray | None] | None = None

    def __len__(self):
        return len(self._parents)

    def watch(self, value) -> Tensor:
        """Register a leaf tensor (e.g. a parameter) on this tape."""
        t = value if isinstance(value, Tensor) else Tensor(value)
        node = self._push((), None, t.shape)
        return Tensor(t.value, self, node)

    def _push(self, parents, vjp, shape) -> int:
        self._parents.append(parents)
        self._vjps.append(vjp)
        self._shapes.append(shape)
        return len(self._parents) - 1

    def backward(self, loss: Tensor) -> list[np.ndarray | None]:
        """Accumulate d(loss)/d(node) for every node reachable from ``loss``."""
        if loss.tape is not self:
            raise ContractError("loss tensor does not belong to this tape")
        if loss.shape != (1, 1):
            raise ContractError(f"backward needs a 1x1 loss, got shape {loss.shape}")
        grads: list[np.ndarray | None] = [None] * len(self._parents)
        grads[loss.node_id] = np.ones((1, 1))
        for i in range(loss.node_id, -1, -1):
            g = grads[i]
            if g is None or self._vjps[i] is None:
                continue
            for parent, pg in zip(self._parents[i], self._vjps[i](g)):
                if parent is None:
                    continue
                grads[parent] = pg if grads[parent] is None else grads[parent] + pg
        self._grads = grads
        return grads

    def grad(self, t: Tensor) -> np.ndarray:
        """Gradient of the last backward loss w.r.t. ``t`` (zeros if unreached)."""
        if self._grads is None:
            raise ContractError("backward() has not been run on this tape")
        if t.tape is not self:
            raise ContractError("tensor does not belong to this tape")
        g = self._grads[t.node_id]
        return np.zeros(self._shapes[t.node_id]) if g is None else g


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _result(value: np.ndarray, operands: Sequence[Tensor], vjp) -> Tensor:
    tape = None
    for op in operands:
        if op.tape is not None:
            if tape is not None and op.tape is not tape:
                raise ContractError("operands live on different tapes")
            tape = op.tape
    if tape is None:
        return Tensor(value)
    parents = tuple(op.node_id if op.tape is tape else None for op in operands)
    node = tape._push(parents, vjp, value.shape)
    out = Tensor.__new__(Tensor)
    out.value = value
    out.tape = tape
    out.node_id = node
    return out


def _same_shape(a: Tensor, b: Tensor, name: str):
    if a.shape != b.shape:
        raise DimensionError(f"{name}: shapes {a.shape} and {b.shape} differ")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.cols != b.rows:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    av, bv = a.value, b.value
    return _result(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g))


def add_broadcast_row(a: Tensor, bias: Tensor) -> Tensor:
    """Add a 1 x cols bias row to every row of ``a``."""
    a, bias = _as_tensor(a), _as_tensor(bias)
    if bias.rows != 1 or bias.cols != a.cols:
        raise DimensionError(f"add_broadcast_row: bias {bias.shape} does not fit {a.shape}")
    return _result(a.value + bias.value, (a, bias), lambda g: (g, g.sum(axis=0, keepdims=True)))


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "add")
    return _result(a.value + b.value, (a, b), lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "sub")
    return _result(a.value - b.value, (a, b), lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    """Elementwise product."""
    a, b = _as_tensor(a), _as_tensor(b)
    _same_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _result(av * bv, (a, b), lambda g: (g * bv, g * av))


def scale(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _result(a.value * k, (a,), lambda g: (g * k,))


def add_scalar(a: Tensor, k: float) -> Tensor:
    k = float(k)
    return _result(a.value + k, (a,), lambda g: (g,))


def relu(a: Tensor) -> Tensor:
    mask = a.value > 0.0
    return _result(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,))


def sigmoid(a: Tensor) -> Tensor:
    x = a.value
    # exp of a non-positive argument only, so neither branch overflows
    e = np.exp(-np.abs(x))
    s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    s = np.clip(s, _SIGMOID_LO, _SIGMOID_HI)
    return _result(s, (a,), lambda g: (g * s * (1.0 - s),))


def exp(a: Tensor) -> Tensor:
    e = np.exp(a.value)
    return _result(e, (a,), lambda g: (g * e,))


def log(a: Tensor) -> Tensor:
    """Natural log of ``max(x, 1e-12)``; zero gradient below the floor."""
    x = a.value
    inside = x > LOG_FLOOR
    safe = np.where(inside, x, LOG_FLOOR)
    return _result(np.log(safe), (a,), lambda g: (np.where(inside, g / safe, 0.0),))


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    sign = np.sign(a.value)
    return _result(np.abs(a.value), (a,), lambda g: (g * sign,))


def sum(a: Tensor) -> Tensor:  # noqa: A001
    shape = a.shape
    return _result(np.array([[a.value.sum()]]), (a,), lambda g: (np.full(shape, g[0, 0]),))


def mean(a: Tensor) -> Tensor:
    shape = a.shape
    n = a.value.size
    return _result(np.array([[a.value.sum() / n]]), (a,), lambda g: (np.full(shape, g[0, 0] / n),))


def softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    e = np.exp(z)
    p = e / e.sum(axis=1, keepdims=True)

    def vjp(g):
        return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

    return _result(p, (a,), vjp)


def log_softmax_rows(a: Tensor) -> Tensor:
    z = a.value - a.value.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    out = z - lse
    p = np.exp(out)

    def vjp(g):
        return (g - p * g.sum(axis=1, keepdims=True),)

    return _result(out, (a,), vjp)


def grad_reverse(a: Tensor, alpha: float) -> Tensor:
    """Identity forward; multiplies the upstream gradient by ``-alpha``."""
    alpha = float(alpha)
    if not alpha >= 0.0:
        raise ConfigError(f"gradient reversal factor must be >= 0, got {alpha}")
    return _result(a.value, (a,), lambda g: (g * -alpha,))


def detach(a: Tensor) -> Tensor:
    """Same values, cut from the tape."""
    return Tensor(a.value)
