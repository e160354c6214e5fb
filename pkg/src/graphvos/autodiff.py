"""Minimal reverse-mode automatic differentiation over numpy arrays.

A Var wraps a float array together with the vector-Jacobian callbacks of
the operation that produced it. `backward` walks the tape in reverse
topological order. Only the handful of primitives the network needs are
provided; reductions use fixed-order numpy accumulation so results are
deterministic.
"""

from __future__ import annotations

import numpy as np
from scipy import special


class Var:
    __slots__ = ("value", "parents", "grad")

    def __init__(self, value, parents=()):
        # dtype is preserved: float64 tapes for gradient checks, float32 for
        # the training hot path
        value = np.asarray(value)
        if value.dtype not in (np.float32, np.float64):
            value = value.astype(np.float64)
        self.value = value
        self.parents = parents  # tuple of (Var, vjp callable)
        self.grad = None

    @property
    def shape(self):
        return self.value.shape

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

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)


def as_var(x):
    return x if isinstance(x, Var) else Var(x)


def _unbroadcast(grad, shape):
    """Reduce `grad` back to `shape` after numpy broadcasting."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def _is_plain_scalar(x):
    """Python numbers stay raw so numpy's weak promotion preserves float32."""
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def add(a, b):
    if isinstance(a, Var) and _is_plain_scalar(b):
        return Var(a.value + b, ((a, lambda g: g),))
    if isinstance(b, Var) and _is_plain_scalar(a):
        return Var(b.value + a, ((b, lambda g: g),))
    a, b = as_var(a), as_var(b)
    return Var(a.value + b.value,
               ((a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(g, b.value.shape))))


def sub(a, b):
    if isinstance(a, Var) and _is_plain_scalar(b):
        return Var(a.value - b, ((a, lambda g: g),))
    if isinstance(b, Var) and _is_plain_scalar(a):
        return Var(a - b.value, ((b, lambda g: -g),))
    a, b = as_var(a), as_var(b)
    return Var(a.value - b.value,
               ((a, lambda g: _unbroadcast(g, a.value.shape)),
                (b, lambda g: _unbroadcast(-g, b.value.shape))))


def mul(a, b):
    if isinstance(a, Var) and _is_plain_scalar(b):
        return Var(a.value * b, ((a, lambda g: g * b),))
    if isinstance(b, Var) and _is_plain_scalar(a):
        return Var(b.value * a, ((b, lambda g: g * a),))
    a, b = as_var(a), as_var(b)
    return Var(a.value * b.value,
               ((a, lambda g: _unbroadcast(g * b.value, a.value.shape)),
                (b, lambda g: _unbroadcast(g * a.value, b.value.shape))))


def div(a, b):
    if isinstance(a, Var) and _is_plain_scalar(b):
        return Var(a.value / b, ((a, lambda g: g / b),))
    a, b = as_var(a), as_var(b)
    inv = 1.0 / b.value
    return Var(a.value * inv,
               ((a, lambda g: _unbroadcast(g * inv, a.value.shape)),
                (b, lambda g: _unbroadcast(-g * a.value * inv * inv,
                                           b.value.shape))))


def matmul(a, b):
    a, b = as_var(a), as_var(b)
    out = a.value @ b.value
    if a.value.ndim == 2 and b.value.ndim == 2:
        return Var(out, ((a, lambda g: g @ b.value.T),
                         (b, lambda g: a.value.T @ g)))
    if a.value.ndim == 2 and b.value.ndim == 1:
        return Var(out, ((a, lambda g: np.outer(g, b.value)),
                         (b, lambda g: a.value.T @ g)))
    raise ValueError(f"unsupported matmul shapes {a.value.shape} @ {b.value.shape}")


def sigmoid(x):
    x = as_var(x)
    s = special.expit(x.value)  # numerically stable in float32
    return Var(s, ((x, lambda g: g * s * (1.0 - s)),))


def relu(x):
    x = as_var(x)
    mask = x.value > 0
    return Var(np.where(mask, x.value, 0.0), ((x, lambda g: g * mask),))


def log(x):
    x = as_var(x)
    return Var(np.log(x.value), ((x, lambda g: g / x.value),))


def power(x, p):
    x = as_var(x)
    return Var(x.value**p,
               ((x, lambda g: g * p * x.value ** (p - 1.0)),))


def clip(x, lo, hi):
    x = as_var(x)
    mask = (x.value > lo) & (x.value < hi)
    return Var(np.clip(x.value, lo, hi), ((x, lambda g: g * mask),))


def mean0(x):
    """Mean over the leading axis."""
    x = as_var(x)
    n = x.value.shape[0]
    return Var(x.value.mean(axis=0),
               ((x, lambda g: np.broadcast_to(g / n, x.value.shape).copy()),))


def total_mean(x):
    x = as_var(x)
    n = x.value.size
    return Var(x.value.mean(),
               ((x, lambda g: np.broadcast_to(g / n, x.value.shape).copy()),))


class ScatterPlan:
    """Precomputed grouping of an index vector for fast segment sums.

    Summation runs in sorted-index order via add.reduceat, which is both
    deterministic and far faster than np.add.at on large edge sets.
    """

    def __init__(self, idx, size):
        idx = np.asarray(idx)
        self.idx = idx
        self.size = size
        if len(idx) and np.all(idx[:-1] <= idx[1:]):
            self.perm = None
            sorted_idx = idx
        else:
            self.perm = np.argsort(idx, kind="stable")
            sorted_idx = idx[self.perm]
        self.uniq, self.starts = np.unique(sorted_idx, return_index=True)

    def segment_sum(self, values):
        out = np.zeros((self.size,) + values.shape[1:], dtype=values.dtype)
        if len(self.idx) == 0:
            return out
        ordered = values if self.perm is None else values[self.perm]
        out[self.uniq] = np.add.reduceat(ordered, self.starts, axis=0)
        return out


def gather(x, idx, plan=None):
    """Row selection x[idx]; gradient scatter-adds back (using `plan` for
    the index vector when provided)."""
    x = as_var(x)
    idx = np.asarray(idx)

    def vjp(g):
        if plan is not None:
            return plan.segment_sum(g)
        out = np.zeros_like(x.value)
        np.add.at(out, idx, g)
        return out

    return Var(x.value[idx], ((x, vjp),))


def scatter_sum(x, idx, size, plan=None):
    """out[i] = sum of rows of x whose idx is i (fixed summation order)."""
    x = as_var(x)
    idx = np.asarray(idx)
    if plan is not None:
        out = plan.segment_sum(x.value)
    else:
        out = np.zeros((size,) + x.value.shape[1:], dtype=x.value.dtype)
        np.add.at(out, idx, x.value)
    return Var(out, ((x, lambda g: g[idx]),))


def backward(root, seed=1.0):
    """Accumulate gradients of `root` (scalar) into every reachable Var."""
    topo = []
    visited = set()
    stack = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            topo.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for parent, _ in node.parents:
            if id(parent) not in visited:
                stack.append((parent, False))

    for node in topo:
        node.grad = None
    root.grad = np.asarray(seed, dtype=root.value.dtype).reshape(root.value.shape)
    for node in reversed(topo):
        g = node.grad
        if g is None:
            continue
        for parent, vjp in node.parents:
            v = vjp(g)
            # first write may alias g; accumulation always allocates fresh
            parent.grad = v if parent.grad is None else parent.grad + v
