"""Minimal reverse-mode automatic differentiation over numpy arrays.

A :class:`Tensor` wraps an ndarray and records how it was produced.  Every
operation in this module accepts plain arrays as well; when no argument is a
Tensor the operation falls through to numpy and returns an ndarray, so the
same model/game code runs untraced at full numpy speed.

Subgradient conventions at kinks: ``relu``/``maximum0`` and ``abs`` use 0,
``leaky_relu`` uses the slope of the negative branch (0.01).
"""

from __future__ import annotations

import numpy as np

LEAKY_SLOPE = 0.01


class NonFiniteError(FloatingPointError):
    """Raised when an objective or gradient evaluates to inf/nan."""


class Tensor:
    __slots__ = ("value", "_parents")
    __array_priority__ = 1000

    def __init__(self, value, parents=()):
        self.value = np.asarray(value, dtype=float)
        # parents: sequence of (Tensor, vjp) with vjp: cotangent -> parent cotangent
        self._parents = parents

    shape = property(lambda self: self.value.shape)
    ndim = property(lambda self: self.value.ndim)
    T = property(lambda self: transpose(self))

    def __len__(self):
        return len(self.value)

    def __repr__(self):
        return f"Tensor({self.value!r})"

    __add__ = lambda a, b: add(a, b)
    __radd__ = lambda a, b: add(b, a)
    __sub__ = lambda a, b: sub(a, b)
    __rsub__ = lambda a, b: sub(b, a)
    __mul__ = lambda a, b: mul(a, b)
    __rmul__ = lambda a, b: mul(b, a)
    __truediv__ = lambda a, b: div(a, b)
    __rtruediv__ = lambda a, b: div(b, a)
    __matmul__ = lambda a, b: matmul(a, b)
    __rmatmul__ = lambda a, b: matmul(b, a)
    __neg__ = lambda a: neg(a)
    __pow__ = lambda a, k: power(a, k)
    __getitem__ = lambda a, idx: getitem(a, idx)

    def sum(self, axis=None):
        return sum_(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], tuple):
            shape = shape[0]
        return reshape(self, shape)


def value(x):
    return x.value if isinstance(x, Tensor) else np.asarray(x, dtype=float)


def _traced(*xs):
    return any(isinstance(x, Tensor) for x in xs)


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _binary(a, b, out, vjp_a, vjp_b):
    parents = []
    if isinstance(a, Tensor):
        parents.append((a, vjp_a))
    if isinstance(b, Tensor):
        parents.append((b, vjp_b))
    return Tensor(out, tuple(parents))


def add(a, b):
    va, vb = value(a), value(b)
    if not _traced(a, b):
        return va + vb
    return _binary(a, b, va + vb,
                   lambda g: _unbroadcast(g, va.shape),
                   lambda g: _unbroadcast(g, vb.shape))


def sub(a, b):
    va, vb = value(a), value(b)
    if not _traced(a, b):
        return va - vb
    return _binary(a, b, va - vb,
                   lambda g: _unbroadcast(g, va.shape),
                   lambda g: _unbroadcast(-g, vb.shape))


def mul(a, b):
    va, vb = value(a), value(b)
    if not _traced(a, b):
        return va * vb
    return _binary(a, b, va * vb,
                   lambda g: _unbroadcast(g * vb, va.shape),
                   lambda g: _unbroadcast(g * va, vb.shape))


def div(a, b):
    va, vb = value(a), value(b)
    if not _traced(a, b):
        return va / vb
    out = va / vb
    return _binary(a, b, out,
                   lambda g: _unbroadcast(g / vb, va.shape),
                   lambda g: _unbroadcast(-g * out / vb, vb.shape))


def neg(a):
    if not isinstance(a, Tensor):
        return -np.asarray(a, dtype=float)
    return Tensor(-a.value, ((a, lambda g: -g),))


def _unary(a, out, deriv):
    """deriv is d out / d a evaluated elementwise (already an array)."""
    return Tensor(out, ((a, lambda g: g * deriv),))


def power(a, k):
    if isinstance(k, Tensor):
        raise TypeError("only constant exponents are supported")
    va = value(a)
    if not isinstance(a, Tensor):
        return va ** k
    return _unary(a, va ** k, k * va ** (k - 1))


def square(a):
    va = value(a)
    if not isinstance(a, Tensor):
        return va * va
    return _unary(a, va * va, 2.0 * va)


def exp(a):
    va = value(a)
    out = np.exp(va)
    return _unary(a, out, out) if isinstance(a, Tensor) else out


def log(a):
    va = value(a)
    return _unary(a, np.log(va), 1.0 / va) if isinstance(a, Tensor) else np.log(va)


def sqrt(a):
    va = value(a)
    out = np.sqrt(va)
    return _unary(a, out, 0.5 / out) if isinstance(a, Tensor) else out


def tanh(a):
    va = value(a)
    out = np.tanh(va)
    return _unary(a, out, 1.0 - out * out) if isinstance(a, Tensor) else out


def sigmoid(a):
    va = value(a)
    out = 0.5 * (1.0 + np.tanh(0.5 * va))
    return _unary(a, out, out * (1.0 - out)) if isinstance(a, Tensor) else out


def swish(a):
    va = value(a)
    s = 0.5 * (1.0 + np.tanh(0.5 * va))
    out = va * s
    if not isinstance(a, Tensor):
        return out
    return _unary(a, out, s + out * (1.0 - s))


def relu(a):
    va = value(a)
    out = np.maximum(va, 0.0)
    if not isinstance(a, Tensor):
        return out
    return _unary(a, out, (va > 0.0).astype(float))


maximum0 = relu


def leaky_relu(a):
    va = value(a)
    out = np.where(va > 0.0, va, LEAKY_SLOPE * va)
    if not isinstance(a, Tensor):
        return out
    return _unary(a, out, np.where(va > 0.0, 1.0, LEAKY_SLOPE))


def abs_(a):
    va = value(a)
    return _unary(a, np.abs(va), np.sign(va)) if isinstance(a, Tensor) else np.abs(va)


def matmul(a, b):
    va, vb = value(a), value(b)
    out = va @ vb
    if not _traced(a, b):
        return out

    def vjp_a(g):
        if vb.ndim == 1:
            return np.multiply.outer(g, vb) if va.ndim == 2 else g * vb
        return g @ vb.T

    def vjp_b(g):
        if va.ndim == 1:
            return np.multiply.outer(va, g) if vb.ndim == 2 else g * va
        if vb.ndim == 1:
            return va.T @ g
        return va.T @ g

    return _binary(a, b, out, vjp_a, vjp_b)


def sum_(a, axis=None):
    va = value(a)
    out = va.sum(axis=axis)
    if not isinstance(a, Tensor):
        return out

    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, va.shape).copy()

    return Tensor(out, ((a, vjp),))


def mean(a, axis=None):
    n = value(a).size if axis is None else value(a).shape[axis]
    return mul(sum_(a, axis), 1.0 / n)


def reshape(a, shape):
    va = value(a)
    if not isinstance(a, Tensor):
        return va.reshape(shape)
    return Tensor(va.reshape(shape), ((a, lambda g: g.reshape(va.shape)),))


def transpose(a):
    va = value(a)
    if not isinstance(a, Tensor):
        return va.T
    return Tensor(va.T, ((a, lambda g: g.T),))


def _is_basic(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer, type(None), type(Ellipsis))) for i in parts)


def getitem(a, idx):
    va = value(a)
    out = va[idx]
    if not isinstance(a, Tensor):
        return out
    basic = _is_basic(idx)

    def vjp(g):
        full = np.zeros_like(va)
        if basic:
            full[idx] = g
        else:
            np.add.at(full, idx, g)
        return full

    return Tensor(out, ((a, vjp),))


def concatenate(parts, axis=0):
    vals = [value(p) for p in parts]
    out = np.concatenate(vals, axis=axis)
    if not _traced(*parts):
        return out
    bounds = np.cumsum([0] + [v.shape[axis] for v in vals])
    parents = []
    for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
        if isinstance(p, Tensor):
            sl = [slice(None)] * out.ndim
            sl[axis] = slice(lo, hi)
            sl = tuple(sl)
            parents.append((p, lambda g, sl=sl: g[sl]))
    return Tensor(out, tuple(parents))


def stack(parts, axis=0):
    return concatenate([reshape(p, _expand_shape(value(p).shape, axis)) for p in parts], axis=axis)


def _expand_shape(shape, axis):
    shape = list(shape)
    if axis < 0:
        axis += len(shape) + 1
    shape.insert(axis, 1)
    return tuple(shape)


def logsumexp(a):
    """log(sum(exp(a))) over all entries, shifted by the max for overflow safety."""
    va = value(a)
    m = va.max()
    e = np.exp(va - m)
    s = e.sum()
    out = m + np.log(s)
    if not isinstance(a, Tensor):
        return out
    w = e / s
    return Tensor(out, ((a, lambda g: g * w),))


def backward(out: Tensor) -> dict:
    """Propagate d out / d node for a scalar ``out``; returns {id(node): grad}."""
    order, seen = [], set()
    stack_ = [(out, False)]
    while stack_:
        node, done = stack_.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack_.append((node, True))
        for parent, _ in node._parents:
            if id(parent) not in seen:
                stack_.append((parent, False))
    grads = {id(out): np.ones_like(out.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None) if node._parents else grads.get(id(node))
        if g is None:
            continue
        for parent, vjp in node._parents:
            contrib = vjp(g)
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + contrib
            else:
                grads[key] = contrib
    return grads


def value_and_grad(objective, theta):
    """Evaluate a scalar ``objective(theta)`` and its reverse-mode gradient."""
    leaf = Tensor(np.array(theta, dtype=float))
    # non-finite results are reported through NonFiniteError below
    with np.errstate(all="ignore"):
        out = objective(leaf)
        scalar = isinstance(out, Tensor) and out.value.size == 1
        grads = backward(out) if scalar else {}
    if not isinstance(out, Tensor):
        f = float(np.asarray(out))
        if not np.isfinite(f):
            raise NonFiniteError(f"objective is {f}")
        return f, np.zeros_like(leaf.value)
    if out.value.size != 1:
        raise ValueError("objective must be scalar")
    f = float(out.value)
    if not np.isfinite(f):
        raise NonFiniteError(f"objective is {f}")
    g = grads.get(id(leaf))
    if g is None:
        g = np.zeros_like(leaf.value)
    if not np.all(np.isfinite(g)):
        raise NonFiniteError("gradient has non-finite entries")
    return f, g


def grad(objective, theta):
    return value_and_grad(objective, theta)[1]
