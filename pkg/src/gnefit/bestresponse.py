"""Agent best responses and value functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import autodiff as ad
from .games import LQGame, QCQPGame, SwitchingGame
from .optim import minimize_box
from .projection import quad_rows
from .qp import RELAXED_TOL, SLACK_RHO, QpProblem, solve_qcqp, solve_qp


@dataclass
class BestResponseResult:
    x_i_star: np.ndarray
    value: float
    slack_used: float
    status: str  # exact | relaxed | local | unbounded | infeasible


def switching_best_response(p, a_i, ell):
    """max(ell, sqrt(p a_i) - a_i): the stationary point of -x/(x+a) + x/p, clipped at ell."""
    if np.any(np.asarray(a_i) <= 0):
        raise ValueError("a_i must be positive")
    return np.maximum(ell, np.sqrt(p * a_i) - a_i)


def switching_best_response_numeric(p, a_i, ell):
    """Same best response via bound-constrained quasi-Newton on x_i in [ell, max(ell, p - a_i)]."""
    p, a_i = float(p), float(a_i)

    def fg(x):
        t = x[0] + a_i
        return -x[0] / t + x[0] / p, np.array([-a_i / t ** 2 + 1.0 / p])

    hi = max(ell, p - a_i)
    x, _, _ = minimize_box(fg, np.array([0.5 * (ell + hi)]), [ell], [hi], gtol=1e-15)
    return float(x[0])


def lq_agent_qp(game, i, x_minus_i, p, slack_rho=SLACK_RHO):
    sl = game.agent_slice(i)
    rest = game.others_index(i)
    Qi = game.Q[i]
    H = Qi[sl, sl]
    f = Qi[sl, rest] @ x_minus_i + game.c[i][sl] + (game.F[i] @ p)[sl]
    A = game.A[:, sl]
    b = game.b + game.S @ p - game.A[:, rest] @ x_minus_i
    return QpProblem(0.5 * (H + H.T), f, A, b, game.x_lb[sl], game.x_ub[sl], slack_rho)


def _status(raw, slack):
    if raw in ("unbounded", "infeasible"):
        return raw
    if raw in ("local", "max_iter"):
        return "local"
    return "relaxed" if slack > RELAXED_TOL else "exact"


def _starts(lo, hi):
    """Five deterministic lattice points of the box [lo, hi]."""
    lo = np.where(np.isfinite(lo), lo, -1.0)
    hi = np.where(np.isfinite(hi), hi, 1.0)
    n = lo.size
    alt = np.arange(n) % 2 == 0
    fracs = [np.full(n, 0.5), np.full(n, 0.1), np.full(n, 0.9),
             np.where(alt, 0.1, 0.9), np.where(alt, 0.9, 0.1)]
    return [lo + t * (hi - lo) for t in fracs]


def best_response(game, i, x_minus_i, p, slack_rho=SLACK_RHO):
    x_minus_i = np.asarray(x_minus_i, dtype=float)
    p = np.asarray(p, dtype=float)
    if isinstance(game, SwitchingGame):
        a = float(np.sum(x_minus_i))
        xi = np.array([switching_best_response(float(p[0]), a, game.ell)])
        slack = max(0.0, float(xi[0] + a - p[0]))
        status = "relaxed" if slack > RELAXED_TOL else "exact"
    elif isinstance(game, QCQPGame):
        qp = lq_agent_qp(game, i, x_minus_i, p, slack_rho)
        quads = quad_rows(game, p, fixed=x_minus_i, free=np.arange(game.n_x)[game.agent_slice(i)])
        res = solve_qcqp(qp.H, qp.f, qp.A, qp.b, quads, qp.lb, qp.ub, slack_rho)
        xi, slack, status = res.x, res.slack, _status(res.status, res.slack)
    elif isinstance(game, LQGame):
        res = solve_qp(lq_agent_qp(game, i, x_minus_i, p, slack_rho))
        xi, slack, status = res.x, res.slack, _status(res.status, res.slack)
    else:
        xi, slack, status = _numeric_best_response(game, i, x_minus_i, p, slack_rho)
    if status == "unbounded":
        return BestResponseResult(xi, -np.inf, slack, status)
    value = float(ad.value(game.cost(i, game.join(i, xi, x_minus_i)[None], p[None]))[0])
    return BestResponseResult(np.asarray(xi, dtype=float), value, float(slack), status)


def _numeric_best_response(game, i, x_minus_i, p, slack_rho):
    sl = game.agent_slice(i)
    lo, hi = game.x_lb[sl], game.x_ub[sl]
    P = p[None]

    def full(xi):
        return game.join(i, xi, x_minus_i)[None]

    def fg(xi):
        f, g = ad.value_and_grad(lambda X: game.cost(i, X, P).sum(), full(xi))
        return f, g[0, sl]

    if game.n_g == 0 and game.n_h == 0:
        x, _, _ = minimize_box(fg, None, lo, hi, starts=_starts(lo, hi), gtol=1e-10)
        return x, 0.0, "local"

    # slack-relaxed NLP in (x_i, s): J_i + 0.5 rho s^2 + rho s, g <= s, h = 0
    def obj(z):
        f, g = fg(z[:-1])
        s = z[-1]
        return f + 0.5 * slack_rho * s * s + slack_rho * s, np.append(g, slack_rho * (s + 1.0))

    cons = []
    if game.n_g:
        cons.append({"type": "ineq",
                     "fun": lambda z: z[-1] - np.asarray(ad.value(game.ineq(full(z[:-1]), P)))[0],
                     "jac": lambda z: np.hstack([-game.ineq_jacobian(full(z[:-1])[0], p)[:, sl],
                                                 np.ones((game.n_g, 1))])})
    if game.n_h:
        cons.append({"type": "eq",
                     "fun": lambda z: np.asarray(ad.value(game.eq(full(z[:-1]), P)))[0],
                     "jac": lambda z: np.hstack([game.eq_jacobian(full(z[:-1])[0], p)[:, sl],
                                                 np.zeros((game.n_h, 1))])})
    bounds = list(zip(lo, hi)) + [(0.0, None)]
    best = None
    for x0 in _starts(lo, hi):
        g0 = np.asarray(ad.value(game.ineq(full(x0), P)))[0]
        z0 = np.append(x0, max(0.0, float(np.max(g0, initial=0.0))))
        res = minimize(obj, z0, jac=True, method="SLSQP", bounds=bounds, constraints=cons,
                       options={"maxiter": 500, "ftol": 1e-14})
        f = obj(res.x)[0]
        if best is None or f < best[0]:
            best = (f, res.x)
    z = best[1]
    return np.clip(z[:-1], lo, hi), max(0.0, float(z[-1])), "local"


def best_responses(game, X, P, slack_rho=SLACK_RHO):
    """Best responses of every agent at every row of X: (K, n_x) decisions, (K, N) values, statuses."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    K = X.shape[0]
    XB = np.empty_like(X)
    values = np.empty((K, game.N))
    statuses = np.empty((K, game.N), dtype=object)
    for k in range(K):
        for i in range(game.N):
            r = best_response(game, i, X[k, game.others_index(i)], P[k], slack_rho)
            XB[k, game.agent_slice(i)] = r.x_i_star
            values[k, i] = r.value
            statuses[k, i] = r.status
    return XB, values, statuses


def ni_gap(game, x, p):
    """Nikaido-Isoda gap sum_i J_i(x) - Jbar_i(x_{-i}) with exact best responses."""
    x = np.asarray(x, dtype=float)
    p = np.asarray(p, dtype=float)
    costs = game.costs(x[None], p[None])[0]
    total = 0.0
    for i in range(game.N):
        total += costs[i] - best_response(game, i, x[game.others_index(i)], p).value
    return float(total)
