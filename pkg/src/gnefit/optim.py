"""Smooth unconstrained optimizers and a box-constrained quasi-Newton wrapper.

All optimizers take ``fun_and_grad(theta) -> (f, g)`` and never mutate their
input arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .autodiff import NonFiniteError


@dataclass(frozen=True)
class AdamConfig:
    learning_rate: float = 1e-3
    epochs: int = 1000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")


@dataclass(frozen=True)
class LbfgsConfig:
    max_iters: int = 2000
    memory: int = 10
    gradient_tolerance: float = 1e-8
    c1: float = 1e-4
    c2: float = 0.9
    max_line_search: int = 25
    max_restarts_on_failure: int = 3

    def __post_init__(self):
        if self.memory < 1:
            raise ValueError("memory must be >= 1")
        if not 0 < self.c1 < self.c2 < 1:
            raise ValueError("need 0 < c1 < c2 < 1")


QUASI_NEWTON = ("lbfgs", "bfgs")


@dataclass(frozen=True)
class OptimizerConfig:
    """Adam followed by a quasi-Newton phase.

    ``quasi_newton`` picks the second phase: "lbfgs" (limited memory,
    strong-Wolfe steps) or "bfgs" (dense inverse Hessian with a weak-Wolfe
    bisection search, which copes far better with the kinks that max(., 0)
    penalties create at constrained optima).  Both read their iteration cap
    and tolerances from ``lbfgs``.
    """

    adam: AdamConfig = field(default_factory=AdamConfig)
    lbfgs: LbfgsConfig = field(default_factory=LbfgsConfig)
    restarts: int = 32
    base_seed: int = 0
    quasi_newton: str = "lbfgs"

    def __post_init__(self):
        if self.quasi_newton not in QUASI_NEWTON:
            raise ValueError(f"quasi_newton must be one of {QUASI_NEWTON}")


def _check(f, g):
    if not np.isfinite(f) or not np.all(np.isfinite(g)):
        raise NonFiniteError("non-finite objective or gradient")


def adam(fun_and_grad, theta0, cfg=AdamConfig()):
    theta = np.array(theta0, dtype=float)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    b1, b2 = cfg.beta1, cfg.beta2
    for t in range(1, cfg.epochs + 1):
        f, g = fun_and_grad(theta)
        _check(f, g)
        m = b1 * m + (1.0 - b1) * g
        v = b2 * v + (1.0 - b2) * g * g
        mhat = m / (1.0 - b1 ** t)
        vhat = v / (1.0 - b2 ** t)
        theta = theta - cfg.learning_rate * mhat / (np.sqrt(vhat) + cfg.eps)
    return theta


@dataclass
class LbfgsResult:
    x: np.ndarray
    fun: float
    grad_norm: float
    iterations: int
    status: str  # "converged", "max_iters", "line_search_failed"


def _cubic_min(a, fa, ga, b, fb, gb):
    """Minimizer of the cubic interpolating (a, fa, ga), (b, fb, gb), or None."""
    d1 = ga + gb - 3.0 * (fa - fb) / (a - b)
    disc = d1 * d1 - ga * gb
    if disc < 0:
        return None
    d2 = np.sign(b - a) * np.sqrt(disc)
    denom = gb - ga + 2.0 * d2
    if denom == 0:
        return None
    return b - (b - a) * (gb + d2 - d1) / denom


def strong_wolfe(phi, f0, g0, c1, c2, max_evals, alpha0=1.0):
    """Bracketing/zoom line search (Nocedal & Wright Alg. 3.5-3.6).

    ``phi(alpha) -> (f, dphi, payload)``.  Returns (alpha, f, payload, ok);
    on failure the best sufficient-decrease point seen is returned with ok=False.
    """
    evals = 0
    best = None

    def record(a, f, payload):
        nonlocal best
        if f <= f0 + c1 * a * g0 and (best is None or f < best[1]):
            best = (a, f, payload)

    def zoom(lo, flo, glo, hi, fhi, ghi):
        nonlocal evals
        prev_width = np.inf
        while evals < max_evals:
            lo_b, hi_b = min(lo, hi), max(lo, hi)
            width = hi_b - lo_b
            # bisect when interpolation stopped shrinking the bracket (kinks, noise)
            a = _cubic_min(lo, flo, glo, hi, fhi, ghi) if width < 0.5 * prev_width else None
            prev_width = width
            if a is None or not (lo_b + 0.1 * width <= a <= hi_b - 0.1 * width):
                a = 0.5 * (lo + hi)
            try:
                f, g, payload = phi(a)
            except NonFiniteError:
                hi, fhi, ghi = a, np.inf, 0.0
                evals += 1
                continue
            evals += 1
            record(a, f, payload)
            if f > f0 + c1 * a * g0 or f >= flo:
                hi, fhi, ghi = a, f, g
            else:
                if abs(g) <= -c2 * g0:
                    return a, f, payload, True
                if g * (hi - lo) >= 0:
                    hi, fhi, ghi = lo, flo, glo
                lo, flo, glo = a, f, g
            if abs(hi - lo) < 1e-16 * max(1.0, abs(lo)):
                break
        return None

    prev_a, prev_f, prev_g = 0.0, f0, g0
    a = alpha0
    while evals < max_evals:
        try:
            f, g, payload = phi(a)
        except NonFiniteError:
            evals += 1
            a = 0.5 * (prev_a + a)
            continue
        evals += 1
        record(a, f, payload)
        if f > f0 + c1 * a * g0 or (evals > 1 and f >= prev_f):
            res = zoom(prev_a, prev_f, prev_g, a, f, g)
            break
        if abs(g) <= -c2 * g0:
            return a, f, payload, True
        if g >= 0:
            res = zoom(a, f, g, prev_a, prev_f, prev_g)
            break
        prev_a, prev_f, prev_g = a, f, g
        a = 2.0 * a
    else:
        res = None
    if res is not None:
        return res
    if best is not None:
        return best[0], best[1], best[2], False
    return None, None, None, False


def lbfgs(fun_and_grad, theta0, cfg=LbfgsConfig()):
    """Limited-memory BFGS with two-loop recursion and strong-Wolfe steps.

    The returned objective never exceeds the initial one: a step is accepted
    only with sufficient decrease, otherwise the current iterate is returned.
    """
    x = np.array(theta0, dtype=float)
    f, g = fun_and_grad(x)
    _check(f, g)
    s_hist, y_hist, rho_hist = [], [], []
    gnorm = float(np.linalg.norm(g))
    if cfg.max_iters <= 0:
        return LbfgsResult(x, f, gnorm, 0, "max_iters")
    status = "max_iters"
    it = 0
    failures, alpha0 = 0, 1.0
    while it < cfg.max_iters:
        if gnorm <= cfg.gradient_tolerance:
            status = "converged"
            break
        # two-loop recursion
        q = g.copy()
        alphas = []
        for s, y, rho in zip(reversed(s_hist), reversed(y_hist), reversed(rho_hist)):
            a = rho * (s @ q)
            q -= a * y
            alphas.append(a)
        if s_hist:
            q *= (s_hist[-1] @ y_hist[-1]) / (y_hist[-1] @ y_hist[-1])
        else:
            q *= min(1.0, 1.0 / gnorm)
        for (s, y, rho), a in zip(zip(s_hist, y_hist, rho_hist), reversed(alphas)):
            b = rho * (y @ q)
            q += (a - b) * s
        d = -q
        dg = float(d @ g)
        if dg >= 0:
            # not a descent direction: reset memory, fall back to steepest descent
            s_hist, y_hist, rho_hist = [], [], []
            d = -g * min(1.0, 1.0 / gnorm)
            dg = float(d @ g)

        def phi(alpha, x=x, d=d):
            xn = x + alpha * d
            fn, gn = fun_and_grad(xn)
            _check(fn, gn)
            return fn, float(gn @ d), (xn, gn)

        alpha, fn, payload, ok = strong_wolfe(phi, f, dg, cfg.c1, cfg.c2, cfg.max_line_search,
                                              alpha0=alpha0)
        it += 1
        if alpha is None:
            # Kinks (max(., 0) terms, relu units) can hide descent at tiny steps:
            # drop the memory and retry steepest descent from much shorter steps.
            s_hist, y_hist, rho_hist = [], [], []
            failures += 1
            if failures > cfg.max_restarts_on_failure:
                status = "line_search_failed"
                break
            alpha0 = 1e-4 ** failures
            continue
        failures, alpha0 = 0, 1.0
        xn, gn = payload
        s, y = xn - x, gn - g
        sy = float(s @ y)
        if sy > 1e-12 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            s_hist.append(s)
            y_hist.append(y)
            rho_hist.append(1.0 / sy)
            if len(s_hist) > cfg.memory:
                s_hist.pop(0), y_hist.pop(0), rho_hist.pop(0)
        stalled = fn >= f and not ok
        x, f, g = xn, fn, gn
        gnorm = float(np.linalg.norm(g))
        if stalled:
            status = "line_search_failed"
            break
    else:
        if gnorm <= cfg.gradient_tolerance:
            status = "converged"
    return LbfgsResult(x, float(f), gnorm, it, status)


def weak_wolfe(fun_and_grad, x, f, g, d, c1, c2, max_evals):
    """Bisection/doubling search for the weak Wolfe conditions.

    Returns (alpha, f, g) at the accepted point or (None, None, None).
    Unlike strong Wolfe this tolerates derivative jumps across kinks.
    """
    lo, hi, a = 0.0, np.inf, 1.0
    gd = float(g @ d)
    for _ in range(max_evals):
        try:
            fa, ga = fun_and_grad(x + a * d)
            _check(fa, ga)
        except NonFiniteError:
            hi = a
        else:
            if fa > f + c1 * a * gd:
                hi = a
            elif float(ga @ d) < c2 * gd:
                lo = a
            else:
                return a, fa, ga
        a = 2.0 * lo if hi == np.inf else 0.5 * (lo + hi)
    return None, None, None


def bfgs(fun_and_grad, theta0, cfg=LbfgsConfig()):
    """Dense BFGS on the inverse Hessian with weak-Wolfe steps.

    Meant for the nonsmooth-at-the-optimum training objectives of small
    networks; reads max_iters, gradient_tolerance, c1, c2 from ``cfg`` and
    allows ``max(60, max_line_search)`` trial steps per search.
    """
    x = np.array(theta0, dtype=float)
    f, g = fun_and_grad(x)
    _check(f, g)
    n = x.size
    H = None
    gnorm = float(np.linalg.norm(g))
    status = "max_iters"
    it = 0
    evals = max(60, cfg.max_line_search)
    while it < cfg.max_iters:
        if gnorm <= cfg.gradient_tolerance:
            status = "converged"
            break
        d = -g if H is None else -(H @ g)
        if float(g @ d) >= 0:
            H = None
            d = -g
        if H is None:
            d = d * min(1.0, 1.0 / gnorm)
        alpha, fn, gn = weak_wolfe(fun_and_grad, x, f, g, d, cfg.c1, cfg.c2, evals)
        it += 1
        if alpha is None:
            if H is not None:
                H = None
                continue
            status = "line_search_failed"
            break
        s = alpha * d
        y = gn - g
        sy = float(s @ y)
        if sy > 1e-16 * float(np.linalg.norm(s) * np.linalg.norm(y)):
            if H is None:
                H = (sy / float(y @ y)) * np.eye(n)
            Hy = H @ y
            r = 1.0 / sy
            H = H - r * (np.outer(s, Hy) + np.outer(Hy, s)) + (r * r * float(y @ Hy) + r) * np.outer(s, s)
        x, f, g = x + s, fn, gn
        gnorm = float(np.linalg.norm(g))
    else:
        if gnorm <= cfg.gradient_tolerance:
            status = "converged"
    return LbfgsResult(x, float(f), gnorm, it, status)


def minimize_box(fun_and_grad, x0, lb, ub, starts=None, gtol=1e-12, max_iters=15000):
    """Bound-constrained quasi-Newton minimization from one or more starts.

    Returns (x, f, converged).  The lowest objective over all starts wins;
    ties keep the earliest start.
    """
    lb = np.asarray(lb, dtype=float)
    ub = np.asarray(ub, dtype=float)
    starts = [np.asarray(x0, dtype=float)] if starts is None else [np.asarray(s, float) for s in starts]
    bounds = list(zip(np.where(np.isfinite(lb), lb, None), np.where(np.isfinite(ub), ub, None)))
    best = None
    for s in starts:
        s = np.clip(s, lb, ub)
        res = minimize(fun_and_grad, s, jac=True, method="L-BFGS-B", bounds=bounds,
                       options={"ftol": 0.0, "gtol": gtol, "maxiter": max_iters, "maxcor": 20})
        x = _polish_box(fun_and_grad, np.clip(res.x, lb, ub), lb, ub)
        f = float(fun_and_grad(x)[0])
        if best is None or f < best[1]:
            best = (x, f, bool(res.success) or _projected_grad_small(fun_and_grad, x, lb, ub))
    return best


def _projected_grad(fun_and_grad, x, lb, ub):
    g = fun_and_grad(x)[1]
    return np.clip(x - g, lb, ub) - x


def _polish_box(fun_and_grad, x, lb, ub, iters=20):
    """Projected Newton steps on the free variables with a difference-quotient Hessian.

    A step is kept only when it shrinks the projected gradient, so this never
    moves away from a stationary point found by the main solver.
    """
    pg = _projected_grad(fun_and_grad, x, lb, ub)
    for _ in range(iters):
        err = float(np.max(np.abs(pg), initial=0.0))
        if err <= 1e-15:
            break
        g = fun_and_grad(x)[1]
        free = ~(((x <= lb) & (g > 0)) | ((x >= ub) & (g < 0)))
        idx = np.flatnonzero(free)
        if idx.size == 0:
            break
        Hf = np.empty((idx.size, idx.size))
        for col, j in enumerate(idx):
            h = 1e-6 * max(1.0, abs(x[j]))
            e = np.zeros_like(x)
            e[j] = h
            Hf[:, col] = (fun_and_grad(x + e)[1][idx] - fun_and_grad(x - e)[1][idx]) / (2 * h)
        Hf = 0.5 * (Hf + Hf.T)
        try:
            if np.linalg.eigvalsh(Hf).min() <= 0:
                break
            step = np.linalg.solve(Hf, g[idx])
        except np.linalg.LinAlgError:
            break
        xn = x.copy()
        xn[idx] = x[idx] - step
        xn = np.clip(xn, lb, ub)
        pgn = _projected_grad(fun_and_grad, xn, lb, ub)
        if float(np.max(np.abs(pgn), initial=0.0)) >= err:
            break
        x, pg = xn, pgn
    return x


def _projected_grad_small(fun_and_grad, x, lb, ub, tol=1e-7):
    g = fun_and_grad(x)[1]
    pg = np.clip(x - g, lb, ub) - x
    return float(np.max(np.abs(pg))) <= tol if pg.size else True
