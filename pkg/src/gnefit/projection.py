"""Least-distance projection onto a game's shared feasible set at fixed p."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from . import autodiff as ad
from .games import LQGame, QCQPGame
from .qp import SLACK_RHO, QpProblem, solve_qcqp, solve_qp

FEAS_TOL = 1e-10


@dataclass
class ProjectionResult:
    x: np.ndarray
    status: str  # exact | relaxed | local | infeasible
    slack: float = 0.0


def is_feasible(game, x, p, tol=FEAS_TOL):
    X, P = x[None], np.asarray(p, dtype=float)[None]
    g = np.asarray(ad.value(game.ineq(X, P)))[0]
    h = np.asarray(ad.value(game.eq(X, P)))[0]
    in_box = np.all(x >= game.x_lb - tol) and np.all(x <= game.x_ub + tol)
    return bool(in_box and np.all(g <= tol) and np.all(np.abs(h) <= tol))


def quad_rows(game, p, fixed=None, free=None):
    """Quadratic rows of a QCQP game as (P, q, r) in the free variables.

    ``fixed`` holds the values of the remaining variables (indices not in
    ``free``); with ``free=None`` all variables are free.
    """
    n = game.n_x
    free = np.arange(n) if free is None else np.asarray(free)
    rest = np.setdiff1d(np.arange(n), free)
    rows = []
    for j in range(game.n_quad):
        Qj, cj = game.Qc[j], game.xc[j]
        Pj = Qj[np.ix_(free, free)]
        dr = (fixed - cj[rest]) if rest.size else np.zeros(0)
        qj = Qj[np.ix_(free, rest)] @ dr - Pj @ cj[free]
        rj = (0.5 * cj[free] @ Pj @ cj[free] + 0.5 * dr @ Qj[np.ix_(rest, rest)] @ dr
              - cj[free] @ Qj[np.ix_(free, rest)] @ dr - game.bc[j] - game.sc[j] @ p)
        rows.append((Pj, qj, rj))
    return rows


def project_onto_feasible(game, p, x_ref, slack_rho=SLACK_RHO):
    """argmin ||x - x_ref||^2 s.t. g(x, p) <= 0, h(x, p) = 0, box.

    Linear and convex-quadratic constraint sets are handled exactly through
    the QP machinery (with the shared slack as an exact penalty); other
    constraint sets fall back to a local NLP solve and report status "local".
    """
    x_ref = np.asarray(x_ref, dtype=float)
    p = np.asarray(p, dtype=float)
    if is_feasible(game, x_ref, p):
        return ProjectionResult(x_ref.copy(), "exact")
    n = game.n_x
    if game.n_g == 0 and game.n_h == 0:
        return ProjectionResult(np.clip(x_ref, game.x_lb, game.x_ub), "exact")
    H = np.eye(n)
    f = -x_ref
    if isinstance(game, LQGame):
        A, b = game.A, game.b + game.S @ p
        if isinstance(game, QCQPGame):
            res = solve_qcqp(H, f, A, b, quad_rows(game, p), game.x_lb, game.x_ub, slack_rho)
            status = {"optimal": "exact"}.get(res.status, res.status)
            return ProjectionResult(res.x, status, res.slack)
        res = solve_qp(QpProblem(H, f, A, b, game.x_lb, game.x_ub, slack_rho))
        status = {"optimal": "exact"}.get(res.status, res.status)
        return ProjectionResult(res.x, status, res.slack)
    if _has_linear_rows(game):
        J = game.ineq_jacobian(x_ref, p)
        g0 = np.asarray(ad.value(game.ineq(x_ref[None], p[None])))[0]
        b = J @ x_ref - g0
        res = solve_qp(QpProblem(H, f, J, b, game.x_lb, game.x_ub, slack_rho))
        status = {"optimal": "exact"}.get(res.status, res.status)
        return ProjectionResult(res.x, status, res.slack)
    return _project_nlp(game, p, x_ref)


def _has_linear_rows(game):
    return getattr(game, "tag", "") == "switching"


def _project_nlp(game, p, x_ref):
    P = p[None]
    cons = []
    if game.n_g:
        cons.append({"type": "ineq",
                     "fun": lambda x: -np.asarray(ad.value(game.ineq(x[None], P)))[0],
                     "jac": lambda x: -game.ineq_jacobian(x, p)})
    if game.n_h:
        cons.append({"type": "eq",
                     "fun": lambda x: np.asarray(ad.value(game.eq(x[None], P)))[0],
                     "jac": lambda x: game.eq_jacobian(x, p)})
    x0 = np.clip(x_ref, game.x_lb, game.x_ub)
    res = minimize(lambda x: (0.5 * np.sum((x - x_ref) ** 2), x - x_ref), x0, jac=True,
                   method="SLSQP", bounds=list(zip(game.x_lb, game.x_ub)), constraints=cons,
                   options={"maxiter": 500, "ftol": 1e-14})
    x = np.clip(res.x, game.x_lb, game.x_ub)
    status = "local" if is_feasible(game, x, p, 1e-8) else "infeasible"
    return ProjectionResult(x, status)
