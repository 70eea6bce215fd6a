"""Reverse-mode automatic differentiation over dense float64 arrays.

A :class:`GradientTape` is an append-only list of primitive operations.
Leaves are registered with :meth:`GradientTape.watch`; every operation on a
tracked :class:`Tensor` appends a node holding its parent indices and a
vector-Jacobian product closure.  Because nodes are appended as they are
computed, the list is already in topological order and the backward sweep is a
single reverse pass.
"""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np
from scipy.special import erf

from ..errors import NumericError, ShapeError

_SQRT2 = np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


class _Node:
    __slots__ = ("parents", "vjp", "name", "shape")

    def __init__(self, parents, vjp, name=None, shape=None):
        self.parents = parents
        self.vjp = vjp
        self.name = name
        self.shape = shape


class GradientTape:
    """Records operations on watched tensors for one backward pass."""

    def __init__(self):
        self.nodes: list[_Node] = []

    def __len__(self):
        return len(self.nodes)

    def watch(self, value, name: str | None = None) -> "Tensor":
        values = _as_array(value)
        _check_finite(values, "watch")
        if name is None:
            name = f"leaf{len(self.nodes)}"
        self.nodes.append(_Node((), None, name, values.shape))
        return Tensor(values, self, len(self.nodes) - 1, name)

    def _record(self, values, parents, vjp) -> "Tensor":
        self.nodes.append(_Node(parents, vjp))
        return Tensor(values, self, len(self.nodes) - 1)

    def leaves(self) -> list[str]:
        return [n.name for n in self.nodes if n.vjp is None]


class Tensor:
    """Dense float64 array with an optional handle into a gradient tape.

    Tensors built outside any tape (``Tensor(x)``) are constants.
    """

    __slots__ = ("values", "tape", "index", "name")
    __array_priority__ = 100.0

    def __init__(self, values, tape: GradientTape | None = None, index: int | None = None,
                 name: str | None = None):
        self.values = values if isinstance(values, np.ndarray) else _as_array(values)
        self.tape = tape
        self.index = index
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def ndim(self) -> int:
        return self.values.ndim

    @property
    def tracked(self) -> bool:
        return self.index is not None

    def __repr__(self):
        tag = f", node={self.index}" if self.tracked else ""
        return f"Tensor(shape={self.shape}{tag})"

    def numpy(self) -> np.ndarray:
        return self.values

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return take(self, index)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    @property
    def T(self):
        return transpose(self)


ArrayLike = Tensor | np.ndarray | float | int


def _as_array(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def _check_finite(values: np.ndarray, op: str) -> None:
    if not np.isfinite(values).all():
        raise NumericError(f"non-finite values produced by {op!r}")


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(_as_array(x))


def _emit(op: str, values: np.ndarray, inputs: Sequence[Tensor],
          vjp: Callable[[np.ndarray], Sequence[np.ndarray | None]]) -> Tensor:
    _check_finite(values, op)
    tape = None
    for t in inputs:
        if t.tape is not None:
            if tape is not None and t.tape is not tape:
                raise NumericError(f"{op!r} mixes tensors from different tapes")
            tape = t.tape
    if tape is None:
        return Tensor(values)
    parents = tuple(t.index if t.tape is tape else None for t in inputs)
    return tape._record(values, parents, vjp)


def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``grad`` down to ``shape`` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


# --- elementwise binary ----------------------------------------------------

def add(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return _emit("add", a.values + b.values, (a, b),
                 lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    sa, sb = a.shape, b.shape
    return _emit("sub", a.values - b.values, (a, b),
                 lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    av, bv = a.values, b.values
    return _emit("mul", av * bv, (a, b),
                 lambda g: (unbroadcast(g * bv, av.shape), unbroadcast(g * av, bv.shape)))


def div(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    av, bv = a.values, b.values
    out = av / bv

    def vjp(g):
        ga = g / bv
        return unbroadcast(ga, av.shape), unbroadcast(-ga * out, bv.shape)

    return _emit("div", out, (a, b), vjp)


def neg(a: ArrayLike) -> Tensor:
    a = _lift(a)
    return _emit("neg", -a.values, (a,), lambda g: (-g,))


def maximum(a: ArrayLike, floor: float) -> Tensor:
    """Elementwise ``max(a, floor)``; gradient passes only where ``a > floor``."""
    a = _lift(a)
    mask = a.values > floor
    return _emit("maximum", np.where(mask, a.values, floor), (a,), lambda g: (g * mask,))


# --- elementwise unary -----------------------------------------------------

def exp(a: ArrayLike) -> Tensor:
    a = _lift(a)
    with np.errstate(over="ignore"):
        out = np.exp(a.values)
    return _emit("exp", out, (a,), lambda g: (g * out,))


def log(a: ArrayLike) -> Tensor:
    a = _lift(a)
    av = a.values
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.log(av)
    return _emit("log", out, (a,), lambda g: (g / av,))


def sqrt(a: ArrayLike) -> Tensor:
    a = _lift(a)
    with np.errstate(invalid="ignore"):
        out = np.sqrt(a.values)
    return _emit("sqrt", out, (a,), lambda g: (g / (2.0 * out),))


def square(a: ArrayLike) -> Tensor:
    a = _lift(a)
    av = a.values
    return _emit("square", av * av, (a,), lambda g: (2.0 * g * av,))


def gelu(a: ArrayLike) -> Tensor:
    """Exact GELU ``x * Phi(x)`` with derivative ``Phi(x) + x * phi(x)``."""
    a = _lift(a)
    x = a.values
    cdf = 0.5 * (1.0 + erf(x / _SQRT2))
    out = x * cdf

    def vjp(g):
        pdf = _INV_SQRT2PI * np.exp(-0.5 * x * x)
        return (g * (cdf + x * pdf),)

    return _emit("gelu", out, (a,), vjp)


# --- linear algebra and reductions ------------------------------------------

def matmul(a: ArrayLike, b: ArrayLike) -> Tensor:
    a, b = _lift(a), _lift(b)
    av, bv = a.values, b.values
    if av.ndim < 2 or bv.ndim < 2:
        raise ShapeError(f"matmul needs at least 2-D operands, got {av.shape} and {bv.shape}")
    if av.shape[-1] != bv.shape[-2]:
        raise ShapeError(f"matmul inner dimensions differ: {av.shape} @ {bv.shape}")

    def vjp(g):
        ga = g @ np.swapaxes(bv, -1, -2)
        gb = np.swapaxes(av, -1, -2) @ g
        return unbroadcast(ga, av.shape), unbroadcast(gb, bv.shape)

    return _emit("matmul", av @ bv, (a, b), vjp)


def tsum(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    shape = a.shape
    out = np.sum(a.values, axis=axis, keepdims=keepdims)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _emit("sum", np.asarray(out, dtype=np.float64), (a,), vjp)


def mean(a: ArrayLike, axis=None, keepdims: bool = False) -> Tensor:
    a = _lift(a)
    count = a.values.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a: ArrayLike, shape) -> Tensor:
    a = _lift(a)
    old = a.shape
    try:
        out = a.values.reshape(shape)
    except ValueError as exc:
        raise ShapeError(f"cannot reshape {old} to {tuple(shape)}") from exc
    return _emit("reshape", out, (a,), lambda g: (g.reshape(old),))


def transpose(a: ArrayLike, axes=None) -> Tensor:
    a = _lift(a)
    out = np.transpose(a.values, axes)
    inv = None if axes is None else np.argsort(axes)
    return _emit("transpose", out, (a,), lambda g: (np.transpose(g, inv),))


def take(a: ArrayLike, index) -> Tensor:
    """Basic or integer-array indexing; repeated indices accumulate in backward."""
    a = _lift(a)
    shape = a.shape

    def vjp(g):
        out = np.zeros(shape)
        np.add.at(out, index, g)
        return (out,)

    return _emit("take", np.asarray(a.values[index], dtype=np.float64), (a,), vjp)


def concat(parts: Sequence[ArrayLike], axis: int = -1) -> Tensor:
    parts = [_lift(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([p.values for p in parts], axis=axis)
    return _emit("concat", out, parts, lambda g: tuple(np.split(g, splits, axis=axis)))


def softmax(a: ArrayLike, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``."""
    a = _lift(a)
    if a.shape[axis] == 0:
        raise ShapeError("softmax over an empty axis")
    z = a.values - a.values.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def vjp(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _emit("softmax", out, (a,), vjp)


# --- backward ----------------------------------------------------------------

def backward(tape: GradientTape, loss: Tensor) -> dict[str, np.ndarray]:
    """Gradients of a scalar ``loss`` with respect to every leaf on ``tape``.

    Leaves the loss does not depend on get zero gradients.
    """
    if loss.tape is not tape or loss.index is None:
        raise NumericError("loss is not recorded on this tape")
    if loss.values.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {loss.index: np.ones_like(loss.values)}
    result: dict[str, np.ndarray] = {}
    nodes = tape.nodes
    for i in range(loss.index, -1, -1):
        node = nodes[i]
        g = grads.pop(i, None)
        if node.vjp is None:
            result[node.name] = np.zeros(node.shape) if g is None else g
            continue
        if g is None:
            continue
        for parent, pg in zip(node.parents, node.vjp(g)):
            if parent is None or pg is None:
                continue
            if parent in grads:
                grads[parent] = grads[parent] + pg
            else:
                grads[parent] = pg
    for node in nodes[loss.index + 1:]:
        if node.vjp is None:
            result[node.name] = np.zeros(node.shape)
    return result
