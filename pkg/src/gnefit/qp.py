"""Dense primal active-set solver for small convex QPs.

    min 0.5 x'Hx + f'x   s.t.  A x <= b,  lb <= x <= ub

with an optional scalar slack ``s >= 0`` shared by all rows of ``A``
(``A x <= b + s``) penalized by ``0.5*rho*s^2 + rho*s``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SLACK_RHO = 1e6
RELAXED_TOL = 1e-6


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    f: np.ndarray
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    slack_rho: float | None = None  # None = hard constraints

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        n = H.shape[0]
        if H.shape != (n, n):
            raise ValueError("H must be square")
        if np.max(np.abs(H - H.T), initial=0.0) > 1e-12:
            raise ValueError("H must be symmetric")
        A = np.zeros((0, n)) if self.A is None else np.asarray(self.A, dtype=float).reshape(-1, n)
        b = np.zeros(0) if self.b is None else np.asarray(self.b, dtype=float).ravel()
        lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=float).ravel()
        ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=float).ravel()
        if A.shape[0] != b.size:
            raise ValueError("A and b disagree in row count")
        if np.any(lb > ub):
            raise ValueError("lb must not exceed ub")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "f", np.asarray(self.f, dtype=float).ravel())
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "lb", lb)
        object.__setattr__(self, "ub", ub)

    @property
    def n(self):
        return self.H.shape[0]


@dataclass
class QpResult:
    x: np.ndarray
    slack: float
    status: str  # optimal | relaxed | unbounded | infeasible | max_iter
    kkt_residual: float
    multipliers: np.ndarray  # for the rows of A
    objective: float
    iterations: int = 0


class _Rows:
    """All inequalities stacked as C z <= d."""

    def __init__(self, C, d, kinds):
        self.C, self.d, self.kinds = C, d, kinds


def _stack_rows(A, b, lb, ub, with_slack):
    n = lb.size
    blocks, rhs, kinds = [], [], []
    if A.shape[0]:
        blk = A if not with_slack else np.hstack([A, -np.ones((A.shape[0], 1))])
        blocks.append(blk)
        rhs.append(b)
        kinds += [("A", j) for j in range(A.shape[0])]
    width = n + int(with_slack)
    for j in np.flatnonzero(np.isfinite(ub)):
        row = np.zeros(width)
        row[j] = 1.0
        blocks.append(row[None])
        rhs.append([ub[j]])
        kinds.append(("ub", j))
    for j in np.flatnonzero(np.isfinite(lb)):
        row = np.zeros(width)
        row[j] = -1.0
        blocks.append(row[None])
        rhs.append([-lb[j]])
        kinds.append(("lb", j))
    if with_slack:
        row = np.zeros(width)
        row[-1] = -1.0
        blocks.append(row[None])
        rhs.append([0.0])
        kinds.append(("s", 0))
    C = np.vstack(blocks) if blocks else np.zeros((0, width))
    d = np.concatenate([np.asarray(r, dtype=float) for r in rhs]) if rhs else np.zeros(0)
    return _Rows(C, d, kinds)


def _null_space(M, n):
    if M.shape[0] == 0:
        return np.eye(n)
    _, sv, vt = np.linalg.svd(M)
    rank = int(np.sum(sv > 1e-12 * max(1.0, sv[0])))
    return vt[rank:].T


def active_set(H, f, C, d, z0, max_iter=None, tol=1e-10):
    """Primal active-set iterations from a feasible ``z0``.

    Returns (z, lam, status, iterations) where ``lam`` are the row multipliers.
    """
    n = H.shape[0]
    m = C.shape[0]
    z = np.array(z0, dtype=float)
    work = []
    max_iter = max_iter or 50 * (n + m) + 100
    scale = max(1.0, float(np.max(np.abs(H), initial=0.0)))
    for it in range(max_iter):
        grad = H @ z + f
        Cw = C[work]
        Z = _null_space(Cw, n)
        ray = False
        if Z.shape[1] == 0:
            p = np.zeros(n)
        else:
            Hr = Z.T @ H @ Z
            gr = Z.T @ grad
            w, V = np.linalg.eigh(Hr)
            flat = w <= 1e-11 * scale
            if not np.any(flat):
                p = -Z @ np.linalg.solve(Hr, gr)
            else:
                v0 = V[:, flat]
                comp = v0.T @ gr
                if np.linalg.norm(comp) > 1e-10 * max(1.0, np.linalg.norm(gr)):
                    p = -Z @ (v0 @ comp)
                    ray = True
                else:
                    inv = np.where(flat, 0.0, 1.0 / np.where(flat, 1.0, w))
                    p = -Z @ (V @ (inv * (V.T @ gr)))
        pnorm = np.linalg.norm(p)
        if not ray and pnorm <= tol * max(1.0, np.linalg.norm(z)):
            lam_w = np.zeros(len(work))
            if work:
                lam_w = np.linalg.lstsq(Cw.T, -grad, rcond=None)[0]
            if not work or lam_w.min() >= -tol * max(1.0, np.abs(lam_w).max()):
                z, lam_w = _polish(H, f, C, d, z, lam_w, work)
                lam = np.zeros(m)
                lam[work] = np.maximum(lam_w, 0.0)
                return z, lam, "optimal", it
            work.pop(int(np.argmin(lam_w)))
            continue
        # ratio test over inactive rows moving toward their boundary
        Cp = C @ p
        slack = d - C @ z
        alpha, block = (np.inf if ray else 1.0), None
        inactive = np.ones(m, dtype=bool)
        inactive[work] = False
        cand = np.flatnonzero(inactive & (Cp > 1e-14 * max(1.0, pnorm)))
        if cand.size:
            ratios = np.maximum(slack[cand], 0.0) / Cp[cand]
            k = int(np.argmin(ratios))
            if ratios[k] < alpha:
                alpha, block = float(ratios[k]), int(cand[k])
        if not np.isfinite(alpha):
            return z, np.zeros(m), "unbounded", it
        z = z + alpha * p
        if block is not None:
            work.append(block)
    return z, np.zeros(m), "max_iter", max_iter


def _polish(H, f, C, d, z, lam_w, work):
    """Re-solve the working-set KKT system directly; keep it if no worse."""
    n, r = H.shape[0], len(work)
    K = np.zeros((n + r, n + r))
    K[:n, :n] = H
    K[:n, n:] = C[work].T
    K[n:, :n] = C[work]
    rhs = np.concatenate([-f, d[work]])
    try:
        sol = np.linalg.solve(K, rhs)
    except np.linalg.LinAlgError:
        return z, lam_w
    if not np.all(np.isfinite(sol)):
        return z, lam_w
    zn, ln = sol[:n], sol[n:]
    lam_old = np.zeros(C.shape[0])
    lam_old[work] = lam_w
    lam_new = np.zeros(C.shape[0])
    lam_new[work] = ln
    if (np.min(ln, initial=0.0) >= -1e-9 * max(1.0, np.abs(ln).max(initial=0.0))
            and _kkt_residual(H, f, C, d, zn, np.maximum(lam_new, 0.0))
            <= _kkt_residual(H, f, C, d, z, np.maximum(lam_old, 0.0))):
        return zn, ln
    return z, lam_w


def _initial_point(lb, ub):
    x0 = np.zeros(lb.size)
    return np.clip(x0, lb, ub)


def _kkt_residual(H, f, C, d, z, lam):
    stat = H @ z + f + C.T @ lam
    res = C @ z - d
    return max(
        float(np.max(np.abs(stat), initial=0.0)),
        float(np.max(np.maximum(res, 0.0), initial=0.0)),
        float(np.max(np.abs(lam * res), initial=0.0)),
        float(np.max(np.maximum(-lam, 0.0), initial=0.0)),
    )


def _phase_one(rows, x0, n):
    """Find a feasible point of C x <= d by minimizing a shared violation t."""
    general = [k for k, kind in enumerate(rows.kinds) if kind[0] == "A"]
    box = [k for k, kind in enumerate(rows.kinds) if kind[0] != "A"]
    C = rows.C
    d = rows.d
    viol = C[general] @ x0 - d[general] if general else np.zeros(0)
    t0 = max(0.0, float(np.max(viol, initial=0.0)))
    if t0 == 0.0:
        return x0, 0.0
    # variables (x, t): 0.5*t^2 + W*t + 0.5*delta*||x - xc||^2, re-centred on
    # each pass so the proximal term cannot keep t positive
    delta, weight = 1e-6, 1e6
    Hp = np.zeros((n + 1, n + 1))
    Hp[:n, :n] = delta * np.eye(n)
    Hp[n, n] = 1.0
    Cg = np.hstack([C[general], -np.ones((len(general), 1))])
    Cb = np.hstack([C[box], np.zeros((len(box), 1))])
    tr = np.zeros((1, n + 1))
    tr[0, n] = -1.0
    Cp = np.vstack([Cg, Cb, tr])
    dp = np.concatenate([d[general], d[box], [0.0]])
    x, t = x0, t0
    for _ in range(8):
        fp = np.concatenate([-delta * x, [weight]])
        z, _, status, _ = active_set(Hp, fp, Cp, dp, np.concatenate([x, [t]]))
        x, t = z[:n], max(0.0, float(z[n]))
        if t <= 1e-12:
            break
    return x, t


def solve_qp(qp: QpProblem) -> QpResult:
    n = qp.n
    with_slack = qp.slack_rho is not None and qp.A.shape[0] > 0
    rows = _stack_rows(qp.A, qp.b, qp.lb, qp.ub, with_slack)
    x0 = _initial_point(qp.lb, qp.ub)
    if with_slack:
        rho = float(qp.slack_rho)
        H = np.zeros((n + 1, n + 1))
        H[:n, :n] = qp.H
        H[n, n] = rho
        f = np.concatenate([qp.f, [rho]])
        s0 = max(0.0, float(np.max(qp.A @ x0 - qp.b, initial=0.0)))
        z0 = np.concatenate([x0, [s0]])
    else:
        H, f = qp.H, qp.f
        rows_x = rows
        x0, t = _phase_one(rows_x, x0, n)
        if t > 1e-9 * max(1.0, float(np.max(np.abs(qp.b), initial=0.0))):
            return QpResult(x0, t, "infeasible", np.inf, np.zeros(qp.A.shape[0]),
                            float(0.5 * x0 @ qp.H @ x0 + qp.f @ x0))
        # push tiny phase-one residue back inside
        x0 = np.clip(x0, qp.lb, qp.ub)
        z0 = x0
    z, lam, status, iters = active_set(H, f, rows.C, rows.d, z0)
    x = z[:n]
    slack = float(z[n]) if with_slack else 0.0
    if status == "optimal":
        kkt = _kkt_residual(H, f, rows.C, rows.d, z, lam)
        if with_slack and slack > RELAXED_TOL:
            status = "relaxed"
    else:
        kkt = np.inf
    lam_a = np.array([lam[k] for k, kind in enumerate(rows.kinds) if kind[0] == "A"])
    obj = float(0.5 * x @ qp.H @ x + qp.f @ x)
    return QpResult(x, slack, status, kkt, lam_a, obj, iters)


@dataclass
class QcqpResult:
    x: np.ndarray
    slack: float
    status: str  # optimal | relaxed | local | infeasible
    iterations: int
    max_violation: float


def solve_qcqp(H, f, A, b, quads, lb, ub, slack_rho=None, max_outer=50, tol=1e-9):
    """Sequential linearization for convex quadratic rows 0.5 y'P y + q'y + r <= 0.

    Each pass solves a QP with the quadratic rows linearized at the current
    iterate and the objective curvature augmented by the previous pass's
    multiplier-weighted row Hessians (an SQP step).
    """
    H = np.atleast_2d(np.asarray(H, dtype=float))
    n = H.shape[0]
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float).reshape(-1, n)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float).ravel()
    m = A.shape[0]

    def quad_vals(x):
        return np.array([0.5 * x @ P @ x + q @ x + r for P, q, r in quads])

    first = solve_qp(QpProblem(H, f, A, b, lb, ub, slack_rho))
    if first.status in ("infeasible", "unbounded", "max_iter") or not quads:
        return QcqpResult(first.x, first.slack, first.status, 0, first.slack)
    x = first.x
    lam = np.zeros(len(quads))
    res = first
    for it in range(1, max_outer + 1):
        Hk = H + sum(l * P for l, (P, _, _) in zip(lam, quads))
        Hk = 0.5 * (Hk + Hk.T)
        grads = np.array([P @ x + q for P, q, _ in quads])
        vals = quad_vals(x)
        A_all = np.vstack([A, grads])
        b_all = np.concatenate([b, grads @ x - vals])
        fk = H @ x + f - Hk @ x
        res = solve_qp(QpProblem(Hk, fk, A_all, b_all, lb, ub, slack_rho))
        if res.status in ("infeasible", "unbounded", "max_iter"):
            break
        step = np.linalg.norm(res.x - x)
        x = res.x
        lam = res.multipliers[m:] if res.multipliers.size else lam
        viol = max(0.0, float(np.max(quad_vals(x), initial=0.0)) - res.slack)
        if viol <= tol and step <= 1e-10 * (1.0 + np.linalg.norm(x)):
            status = "relaxed" if res.slack > RELAXED_TOL else "optimal"
            return QcqpResult(x, res.slack, status, it, res.slack + viol)
    viol = max(0.0, float(np.max(quad_vals(x), initial=0.0)))
    return QcqpResult(x, res.slack, "local", max_outer, viol)
