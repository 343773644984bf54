"""A small reverse-mode differentiation engine over dense 2-D float64 matrices.

Every op returns a new :class:`Tensor` that remembers its parents and a
closure mapping the output gradient to parent gradients. Tensors get a
monotonically increasing id at creation, so sorting the reachable nodes by
decreasing id is a valid reverse topological order for :func:`backward`.
"""

from __future__ import annotations

import itertools
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp


class ShapeMismatch(ValueError):
    pass


class LogOfNonPositive(ValueError):
    pass


class NotAScalar(ValueError):
    pass


class NonFiniteValue(FloatingPointError):
    pass


_ids = itertools.count()

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    __slots__ = ("value", "grad", "requires_grad", "id", "op", "_parents", "_backward")
    __array_priority__ = 100  # make ndarray <op> Tensor defer to Tensor

    def __init__(self, value, requires_grad: bool = False, *, _parents: tuple = (),
                 _backward: BackwardFn | None = None, op: str = "leaf"):
        v = np.asarray(value, dtype=np.float64)
        if v.ndim == 0:
            v = v.reshape(1, 1)
        elif v.ndim == 1:
            v = v.reshape(1, -1)
        elif v.ndim > 2:
            raise ShapeMismatch(f"only 2-D tensors are supported, got shape {v.shape}")
        self.value = v
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.id = next(_ids)
        self.op = op
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def item(self) -> float:
        if self.value.size != 1:
            raise NotAScalar(f"tensor of shape {self.shape} is not a scalar")
        return float(self.value[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return add(self, neg(other))

    def __rsub__(self, other):
        return add(other, neg(self))

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

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

    @property
    def T(self):
        return transpose(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
    if not np.all(np.isfinite(value)):
        raise NonFiniteValue(f"non-finite value produced by {op}")
    if any(p.requires_grad for p in parents):
        return Tensor(value, True, _parents=parents, _backward=backward, op=op)
    return Tensor(value, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    for axis in (0, 1):
        if shape[axis] == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeMismatch(f"{op}: incompatible shapes {a.shape} and {b.shape}") from None


# ----------------------------------------------------------------------------
# elementwise

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    return _make(a.value + b.value, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)), "add")


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,), "neg")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    av, bv = a.value, b.value
    return _make(av * bv, (a, b),
                 lambda g: (_unbroadcast(g * bv, a.shape), _unbroadcast(g * av, b.shape)), "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    av, bv = a.value, b.value
    out = av / bv
    return _make(out, (a, b),
                 lambda g: (_unbroadcast(g / bv, a.shape), _unbroadcast(-g * out / bv, b.shape)),
                 "div")


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.value)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a) -> Tensor:
    a = as_tensor(a)
    if np.any(a.value <= 0):
        raise LogOfNonPositive(f"log of non-positive entry (min {a.value.min()!r})")
    av = a.value
    return _make(np.log(av), (a,), lambda g: (g / av,), "log")


def relu(a) -> Tensor:
    a = as_tensor(a)
    gate = a.value > 0
    return _make(np.where(gate, a.value, 0.0), (a,), lambda g: (g * gate,), "relu")


# ----------------------------------------------------------------------------
# reductions and shape ops

def sum(a, axis: int | None = None) -> Tensor:  # noqa: A001
    a = as_tensor(a)
    shape = a.shape
    if axis is None:
        out = np.array([[a.value.sum()]])
    else:
        out = a.value.sum(axis=axis, keepdims=True)
    return _make(out, (a,), lambda g: (np.broadcast_to(g, shape).copy(),), "sum")


def mean(a, axis: int | None = None) -> Tensor:
    a = as_tensor(a)
    count = a.value.size if axis is None else a.shape[axis]
    return mul(sum(a, axis), 1.0 / count)


def transpose(a) -> Tensor:
    a = as_tensor(a)
    return _make(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")


# ----------------------------------------------------------------------------
# products

def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ShapeMismatch(f"matmul: {a.shape} @ {b.shape}")
    av, bv = a.value, b.value
    return _make(av @ bv, (a, b), lambda g: (g @ bv.T, av.T @ g), "matmul")


def spmm(adj: sp.sparray | sp.spmatrix, x) -> Tensor:
    """Sparse (constant) times dense; only ``x`` receives a gradient."""
    x = as_tensor(x)
    if adj.shape[1] != x.shape[0]:
        raise ShapeMismatch(f"spmm: {adj.shape} @ {x.shape}")
    adj_t = adj.T.tocsr()
    return _make(np.asarray(adj @ x.value), (x,), lambda g: (np.asarray(adj_t @ g),), "spmm")


def row_l2_normalize(a) -> Tensor:
    """Scale each row to unit Euclidean norm; all-zero rows stay zero."""
    a = as_tensor(a)
    # scale by the row maximum first so huge entries do not overflow the squares
    peak = np.abs(a.value).max(axis=1, keepdims=True)
    nz = peak > 0
    scaled = a.value / np.where(nz, peak, 1.0)
    norms = peak * np.sqrt((scaled * scaled).sum(axis=1, keepdims=True))
    safe = np.where(nz, norms, 1.0)
    out = np.where(nz, a.value / safe, 0.0)

    def backward(g):
        proj = (g * out).sum(axis=1, keepdims=True)
        return (np.where(nz, (g - out * proj) / safe, 0.0),)

    return _make(out, (a,), backward, "row_l2_normalize")


# ----------------------------------------------------------------------------

def backward(loss: Tensor) -> None:
    """Accumulate ``d loss / d leaf`` into ``.grad`` of every reachable leaf that requires it."""
    if loss.shape != (1, 1):
        raise NotAScalar(f"backward needs a 1x1 loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    nodes: dict[int, Tensor] = {}
    stack = [loss]
    while stack:
        t = stack.pop()
        if t.id in nodes or not t.requires_grad:
            continue
        nodes[t.id] = t
        stack.extend(t._parents)

    grads: dict[int, np.ndarray] = {loss.id: np.ones((1, 1))}
    for tid in sorted(nodes, reverse=True):
        t = nodes[tid]
        g = grads.pop(tid, None)
        if g is None:
            continue
        if t._backward is None:
            t.grad = g.copy() if t.grad is None else t.grad + g
            continue
        for parent, pg in zip(t._parents, t._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.id in grads:
                grads[parent.id] = grads[parent.id] + pg
            else:
                grads[parent.id] = pg
