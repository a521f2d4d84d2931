"""Parametric game containers.

Every game evaluates batched quantities: ``X`` is (K, n_x), ``P`` is (K, n_p),
costs come back as (K,) and constraints as (K, n_g) / (K, n_h).  The
evaluators are written against :mod:`gnefit.autodiff` so they can be traced
for gradients or run on plain arrays.
"""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad

TAGS = ("lq", "qcqp", "switching", "nonconvex_tanh", "single_agent", "custom")


class ParametricGame:
    """N agents with costs J_i(x, p), shared constraints g <= 0, h = 0 and boxes."""

    tag = "custom"

    def __init__(self, agent_dims, n_p, p_lb, p_ub, x_lb, x_ub, name=None):
        self.agent_dims = tuple(int(n) for n in agent_dims)
        if not self.agent_dims or any(n < 1 for n in self.agent_dims):
            raise ValueError("need at least one agent with n_i >= 1")
        self.n_p = int(n_p)
        self.p_lb = _vec(p_lb, self.n_p)
        self.p_ub = _vec(p_ub, self.n_p)
        self.x_lb = _vec(x_lb, self.n_x)
        self.x_ub = _vec(x_ub, self.n_x)
        if np.any(self.p_lb > self.p_ub) or np.any(self.x_lb > self.x_ub):
            raise ValueError("box lower bounds exceed upper bounds")
        self.name = name or self.tag
        offsets = np.cumsum((0,) + self.agent_dims)
        self._slices = [slice(int(a), int(b)) for a, b in zip(offsets[:-1], offsets[1:])]

    # -- structure ---------------------------------------------------------
    @property
    def N(self):
        return len(self.agent_dims)

    @property
    def n_x(self):
        return sum(self.agent_dims)

    n_g = 0
    n_h = 0

    def agent_slice(self, i):
        return self._slices[i]

    def others_index(self, i):
        """Column indices of x_{-i} in x."""
        sl = self._slices[i]
        return np.r_[0:sl.start, sl.stop:self.n_x].astype(int)

    def split(self, x, i):
        x = np.asarray(x, dtype=float)
        return x[..., self._slices[i]], x[..., self.others_index(i)]

    def join(self, i, x_i, x_minus_i):
        """Assemble the joint decision from x_i and x_{-i} (vectors or batches)."""
        x_i = np.asarray(x_i, dtype=float)
        x_minus_i = np.asarray(x_minus_i, dtype=float)
        shape = x_i.shape[:-1] + (self.n_x,)
        x = np.empty(shape)
        x[..., self._slices[i]] = x_i
        x[..., self.others_index(i)] = x_minus_i
        return x

    def is_single_agent(self):
        return self.N == 1

    # -- batched evaluators (override) ---------------------------------------
    def cost(self, i, X, P):
        raise NotImplementedError

    def ineq(self, X, P):
        return np.zeros((ad.value(X).shape[0], 0))

    def eq(self, X, P):
        return np.zeros((ad.value(X).shape[0], 0))

    def costs(self, X, P):
        return np.stack([ad.value(self.cost(i, X, P)) for i in range(self.N)], axis=1)

    def ineq_jacobian(self, x, p):
        """Jacobian of g with respect to x at one point, (n_g, n_x)."""
        return _jacobian_rows(self.ineq, x, p, self.n_g)

    def eq_jacobian(self, x, p):
        return _jacobian_rows(self.eq, x, p, self.n_h)

    # -- serialization hooks -------------------------------------------------
    def record(self):
        """(options, arrays, expressions) describing the game for file output."""
        raise NotImplementedError

    def __repr__(self):
        return (f"{type(self).__name__}(name={self.name!r}, N={self.N}, "
                f"n_x={self.n_x}, n_p={self.n_p}, n_g={self.n_g}, n_h={self.n_h})")


def _vec(v, n):
    arr = np.broadcast_to(np.asarray(v, dtype=float), (n,)).copy()
    arr.flags.writeable = False
    return arr


def _jacobian_rows(fn, x, p, rows):
    x = np.asarray(x, dtype=float)
    P = np.asarray(p, dtype=float)[None, :]
    if rows == 0:
        return np.zeros((0, x.size))
    jac = np.empty((rows, x.size))
    for j in range(rows):
        jac[j] = ad.grad(lambda X: fn(X, P)[:, j].sum(), x[None, :])[0]
    return jac


def _check_dims(game, x, p):
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    if x.shape != (game.n_x,):
        raise ValueError(f"x has shape {x.shape}, expected ({game.n_x},)")
    if p.shape != (game.n_p,):
        raise ValueError(f"p has shape {p.shape}, expected ({game.n_p},)")
    return x, p


def eval_cost(game, i, x, p):
    x, p = _check_dims(game, x, p)
    if not 0 <= i < game.N:
        raise ValueError(f"agent index {i} out of range")
    return float(ad.value(game.cost(i, x[None], p[None]))[0])


def cost_grad(game, i, x, p):
    """Gradient of J_i with respect to the full x at one point."""
    x, p = _check_dims(game, x, p)
    return ad.grad(lambda X: game.cost(i, X, p[None]).sum(), x[None])[0]


def eval_constraints(game, x, p):
    x, p = _check_dims(game, x, p)
    g = np.asarray(ad.value(game.ineq(x[None], p[None])))[0]
    h = np.asarray(ad.value(game.eq(x[None], p[None])))[0]
    return g, h


def pseudo_gradient(game, x, p):
    """Stacked per-agent partial gradients [dJ_i/dx_i]."""
    x, p = _check_dims(game, x, p)
    return np.concatenate([cost_grad(game, i, x, p)[game.agent_slice(i)] for i in range(game.N)])


def violation(game, X, P):
    """Per-sample worst violation max(max_j g_j^+, max_t |h_t|), shape (K,)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    g = np.asarray(ad.value(game.ineq(X, P)))
    h = np.asarray(ad.value(game.eq(X, P)))
    parts = [np.zeros(X.shape[0])]
    if g.shape[1]:
        parts.append(np.maximum(g, 0.0).max(axis=1))
    if h.shape[1]:
        parts.append(np.abs(h).max(axis=1))
    return np.max(np.stack(parts, axis=1), axis=1)
