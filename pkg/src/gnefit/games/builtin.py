"""Concrete game families and the built-in benchmark instances."""

from __future__ import annotations

import numpy as np

from .. import autodiff as ad
from .base import ParametricGame


class LQGame(ParametricGame):
    """J_i = 0.5 x'Q_i x + c_i'x + (F_i p)'x,  g(x, p) = A x - b - S p."""

    tag = "lq"

    def __init__(self, agent_dims, Q, c, F, A, b, S, p_lb, p_ub, x_lb, x_ub,
                 name=None, tag=None):
        super().__init__(agent_dims, np.asarray(F).shape[-1], p_lb, p_ub, x_lb, x_ub, name)
        if tag is not None:
            self.tag = tag
        n, N = self.n_x, self.N
        self.Q = np.asarray(Q, dtype=float).reshape(N, n, n)
        self.c = np.asarray(c, dtype=float).reshape(N, n)
        self.F = np.asarray(F, dtype=float).reshape(N, n, self.n_p)
        self.A = np.asarray(A, dtype=float).reshape(-1, n)
        self.b = np.asarray(b, dtype=float).ravel()
        self.S = np.asarray(S, dtype=float).reshape(-1, self.n_p)
        if not (self.A.shape[0] == self.b.size == self.S.shape[0]):
            raise ValueError("A, b, S disagree in row count")
        for i in range(N):
            if np.max(np.abs(self.Q[i] - self.Q[i].T)) > 1e-12:
                raise ValueError(f"Q_{i} must be symmetric")
            sl = self.agent_slice(i)
            if np.linalg.eigvalsh(self.Q[i][sl, sl]).min() < -1e-12:
                raise ValueError(f"diagonal block of Q_{i} must be PSD")

    @property
    def n_lin(self):
        return self.A.shape[0]

    @property
    def n_g(self):
        return self.n_lin

    def cost(self, i, X, P):
        quad = ad.sum_((X @ self.Q[i]) * X, axis=1)
        lin = X @ self.c[i]
        par = ad.sum_((P @ self.F[i].T) * X, axis=1)
        return 0.5 * quad + lin + par

    def linear_ineq(self, X, P):
        return X @ self.A.T - self.b - P @ self.S.T

    def ineq(self, X, P):
        return self.linear_ineq(X, P)

    def ineq_jacobian(self, x, p):
        return self.A.copy()

    def pseudo_gradient_jacobian(self):
        """Constant x-Jacobian G of the pseudo-gradient."""
        return np.vstack([self.Q[i][self.agent_slice(i), :] for i in range(self.N)])

    def record(self):
        arrays = dict(Q=self.Q, c=self.c, F=self.F, A=self.A, b=self.b, S=self.S)
        return {}, arrays, {}


class QCQPGame(LQGame):
    """LQ costs with extra convex rows 0.5(x - x^c_j)'Q^c_j(x - x^c_j) - b^c_j - s^c_j'p <= 0."""

    tag = "qcqp"

    def __init__(self, agent_dims, Q, c, F, A, b, S, Qc, xc, bc, sc,
                 p_lb, p_ub, x_lb, x_ub, name=None, tag=None):
        super().__init__(agent_dims, Q, c, F, A, b, S, p_lb, p_ub, x_lb, x_ub, name=name, tag=tag)
        n = self.n_x
        self.Qc = np.asarray(Qc, dtype=float).reshape(-1, n, n)
        q = self.Qc.shape[0]
        self.xc = np.asarray(xc, dtype=float).reshape(q, n)
        self.bc = np.asarray(bc, dtype=float).reshape(q)
        self.sc = np.asarray(sc, dtype=float).reshape(q, self.n_p)
        for j in range(q):
            if np.linalg.eigvalsh(self.Qc[j]).min() <= 0:
                raise ValueError(f"Qc_{j} must be positive definite")

    @property
    def n_quad(self):
        return self.Qc.shape[0]

    @property
    def n_g(self):
        return self.n_lin + self.n_quad

    def quad_ineq(self, X, P):
        cols = []
        for j in range(self.n_quad):
            D = X - self.xc[j]
            cols.append(0.5 * ad.sum_((D @ self.Qc[j]) * D, axis=1) - self.bc[j] - P @ self.sc[j])
        return ad.stack(cols, axis=1)

    def ineq(self, X, P):
        parts = [self.linear_ineq(X, P)] if self.n_lin else []
        if self.n_quad:
            parts.append(self.quad_ineq(X, P))
        return ad.concatenate(parts, axis=1)

    def ineq_jacobian(self, x, p):
        quad = np.array([self.Qc[j] @ (x - self.xc[j]) for j in range(self.n_quad)])
        return np.vstack([self.A, quad.reshape(-1, self.n_x)])

    def ineq_hessians(self):
        """Hessians of all inequality rows (zeros for linear rows)."""
        zeros = np.zeros((self.n_lin, self.n_x, self.n_x))
        return np.concatenate([zeros, self.Qc], axis=0)

    def record(self):
        opts, arrays, exprs = super().record()
        arrays.update(Qc=self.Qc, xc=self.xc, bc=self.bc, sc=self.sc)
        return opts, arrays, exprs


class SwitchingGame(ParametricGame):
    """Internet-switching variant: J_i = -x_i/S (1 - S/p), S = sum x, sum x <= p, x_i >= ell."""

    tag = "switching"

    def __init__(self, N=2, ell=0.01, p_max=2.0, name=None):
        if N < 2:
            raise ValueError("switching game needs N >= 2")
        if not (ell > 0 and N * ell < p_max):
            raise ValueError("need ell > 0 and N*ell < p_max")
        self.ell = float(ell)
        self.p_max = float(p_max)
        super().__init__([1] * N, 1, N * ell, p_max, ell, p_max, name or f"switching20_N{N}")

    n_g = 1

    def cost(self, i, X, P):
        total = ad.sum_(X, axis=1)
        xi = X[:, i]
        return -xi / total + xi / P[:, 0]

    def ineq(self, X, P):
        return ad.reshape(ad.sum_(X, axis=1) - P[:, 0], (-1, 1))

    def ineq_jacobian(self, x, p):
        return np.ones((1, self.n_x))

    def record(self):
        return {"N": self.N, "ell": self.ell, "p_max": self.p_max}, {}, {}


class NonconvexTanhGame(ParametricGame):
    """Box-constrained nonconvex game with a tanh coupling term (agents numbered from 1).

    With S = sum_j x_j in R^2:
        J_i = (i+1)|S|^2 + p_1 (N-i) <S - x_i, S> + p_2 tanh(i |x|^2)
    """

    tag = "nonconvex_tanh"

    def __init__(self, N=2, name=None):
        if N < 1:
            raise ValueError("N must be >= 1")
        super().__init__([2] * N, 2, -1.0, 1.0, -1.0, 1.0, name or f"nonconvex21_N{N}")

    def _block_sum(self, X):
        total = X[:, 0:2]
        for j in range(1, self.N):
            total = total + X[:, 2 * j:2 * j + 2]
        return total

    def cost(self, i, X, P):
        k = i + 1
        S = self._block_sum(X)
        others = S - X[:, 2 * i:2 * i + 2]
        term1 = (k + 1) * ad.sum_(S * S, axis=1)
        term2 = P[:, 0] * (self.N - k) * ad.sum_(others * S, axis=1)
        term3 = P[:, 1] * ad.tanh(k * ad.sum_(X * X, axis=1))
        return term1 + term2 + term3

    def record(self):
        return {"N": self.N}, {}, {}


# ---------------------------------------------------------------------------
# built-in instances

def lq17():
    Q1 = np.array([[1.99, -0.67], [-0.67, 0.0]])
    Q2 = np.array([[0.0, 0.09], [0.09, 1.12]])
    c = np.array([[-0.84, 0.0], [0.0, 0.7]])
    F = np.array([[[-1.3, 1.2], [0.0, 0.0]],
                  [[0.0, 0.0], [1.45, 0.09]]])
    A = np.array([[-0.98, 0.05], [0.16, -1.21], [2.22, 0.39], [1.69, -1.11], [1.64, -1.36]])
    b = np.array([1.27, 0.68, 0.88, 1.0, 1.19])
    S = np.array([[0.13, 0.16], [0.16, 0.19], [0.14, 0.16], [0.12, 0.15], [0.12, 0.19]])
    return LQGame([1, 1], [Q1, Q2], c, F, A, b, S, -1.0, 1.0, -1.0, 1.0, name="lq17")


def nonmono18():
    Q1 = np.array([[1.0, 2.0], [2.0, 0.0]])
    Q2 = np.array([[0.0, 3.0], [3.0, 1.0]])
    c = np.array([[15.0, 0.0], [0.0, 3.0]])
    F = np.array([[[0.0], [0.0]], [[0.0], [0.4]]])
    A = np.array([[1.0, 1.0]])
    b = np.array([-0.3])
    S = np.array([[1.0]])
    return LQGame([1, 1], [Q1, Q2], c, F, A, b, S, -1.0, 1.0, -1.0, 1.0, name="nonmono18")


def nonmono18_solution(p):
    """Continuous v-GNE map of the non-monotone game, vectorized over p."""
    p = np.asarray(p, dtype=float)
    x2 = np.where(p <= -0.5, 0.7 + p, -0.4 * p)
    return np.stack([-np.ones_like(p), x2], axis=-1)


def _monotone_blocks(rng, agent_dims, min_eig=0.1):
    """Per-agent Q_i whose stacked pseudo-gradient Jacobian G has sym(G) >= min_eig."""
    n = sum(agent_dims)
    offsets = np.cumsum((0,) + tuple(agent_dims))
    G = rng.normal(size=(n, n)) / np.sqrt(n)
    for a, b in zip(offsets[:-1], offsets[1:]):
        G[a:b, a:b] = 0.5 * (G[a:b, a:b] + G[a:b, a:b].T)
    lam = np.linalg.eigvalsh(0.5 * (G + G.T)).min()
    mu = max(0.0, min_eig - lam) + 1e-9
    G = G + mu * np.eye(n)
    Q = np.zeros((len(agent_dims), n, n))
    for i, (a, b) in enumerate(zip(offsets[:-1], offsets[1:])):
        Q[i][a:b, :] = G[a:b, :]
        Q[i][:, a:b] = G[a:b, :].T
        Q[i][a:b, a:b] = G[a:b, a:b]
    return Q, G


def _feasible_rows(rng, m, n, n_p, p_abs):
    """Rows A x <= b + S p with x = 0 strictly feasible for every p in the box."""
    A = rng.normal(size=(m, n))
    S = 0.3 * rng.normal(size=(m, n_p))
    b = np.abs(S) @ p_abs + rng.uniform(0.2, 1.0, size=m)
    return A, b, S


def random_lq_gnep(seed, N=2, n_i=2, n_p=2, m=None, name=None):
    rng = np.random.default_rng(seed)
    m = 20 * N if m is None else m
    dims = [n_i] * N
    n = N * n_i
    Q, _ = _monotone_blocks(rng, dims)
    c = np.zeros((N, n))
    F = np.zeros((N, n, n_p))
    offsets = np.cumsum([0] + dims)
    for i in range(N):
        a, b_ = offsets[i], offsets[i + 1]
        c[i, a:b_] = rng.normal(size=n_i)
        F[i, a:b_, :] = rng.normal(size=(n_i, n_p))
    A, b, S = _feasible_rows(rng, m, n, n_p, np.ones(n_p))
    return LQGame(dims, Q, c, F, A, b, S, -1.0, 1.0, -1.0, 1.0,
                  name=name or f"random_lq_N{N}_np{n_p}_s{seed}")


def _quadratic_rows(rng, q, n, n_p, p_abs, center_scale=0.3):
    Qc, xc, bc, sc = [], [], [], []
    for _ in range(q):
        L = rng.normal(size=(n, n)) / np.sqrt(n)
        Qj = L @ L.T + 0.5 * np.eye(n)
        cj = rng.uniform(-center_scale, center_scale, size=n)
        sj = 0.1 * rng.normal(size=n_p)
        margin = np.abs(sj) @ p_abs + rng.uniform(0.1, 0.6)
        Qc.append(Qj)
        xc.append(cj)
        sc.append(sj)
        bc.append(0.5 * cj @ Qj @ cj + margin)
    return np.array(Qc), np.array(xc), np.array(bc), np.array(sc)


def qcqp19(seed=19):
    """Seeded 3-agent QCQP game: 8 linear and 4 convex quadratic shared rows."""
    rng = np.random.default_rng(seed)
    base = random_lq_gnep(int(rng.integers(2**31)), N=3, n_i=1, n_p=2, m=8)
    Qc, xc, bc, sc = _quadratic_rows(rng, 4, 3, 2, np.ones(2))
    return QCQPGame(base.agent_dims, base.Q, base.c, base.F, base.A, base.b, base.S,
                    Qc, xc, bc, sc, -1.0, 1.0, -1.0, 1.0, name=f"qcqp19_s{seed}")


def random_mpqp(seed=0, n_x=10, n_p=6, m=50, x_bound=5.0):
    """Single-agent mpQP: min 0.5x'Hx + (f + Fp)'x s.t. Ax <= b + Sp, p in [0, 1]^n_p."""
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(n_x, n_x)) / np.sqrt(n_x)
    H = L @ L.T + 0.5 * np.eye(n_x)
    f = rng.normal(size=n_x) * 2.0
    F = rng.normal(size=(n_x, n_p))
    A = rng.normal(size=(m, n_x))
    S = 0.3 * rng.normal(size=(m, n_p))
    b = np.maximum(-S, 0.0).sum(axis=1) + rng.uniform(0.5, 1.5, size=m)
    return LQGame([n_x], H[None], f[None], F[None], A, b, S, 0.0, 1.0, -x_bound, x_bound,
                  name=f"mpqp_s{seed}", tag="single_agent")


def random_mpqcqp(seed=0, n_x=10, n_p=6, m=50, q=20, x_bound=5.0):
    base = random_mpqp(seed, n_x, n_p, m, x_bound)
    rng = np.random.default_rng([seed, 1])
    Qc, xc, bc, sc = _quadratic_rows(rng, q, n_x, n_p, np.ones(n_p))
    return QCQPGame(base.agent_dims, base.Q, base.c, base.F, base.A, base.b, base.S,
                    Qc, xc, bc, sc, 0.0, 1.0, -x_bound, x_bound,
                    name=f"mpqcqp_s{seed}", tag="single_agent")


BUILTINS = {
    "lq17": lambda: lq17(),
    "nonmono18": lambda: nonmono18(),
    "qcqp19": lambda seed=19: qcqp19(int(seed)),
    "switching20": lambda N=2, ell=0.01: SwitchingGame(int(N), float(ell)),
    "nonconvex21": lambda N=2: NonconvexTanhGame(int(N)),
    "random_lq": lambda seed=0, N=2, n_i=2, n_p=2, m=None: random_lq_gnep(
        int(seed), int(N), int(n_i), int(n_p), None if m is None else int(m)),
    "mpqp": lambda seed=0, n_x=10, n_p=6, m=50: random_mpqp(int(seed), int(n_x), int(n_p), int(m)),
    "mpqcqp": lambda seed=0, n_x=10, n_p=6, m=50, q=20: random_mpqcqp(
        int(seed), int(n_x), int(n_p), int(m), int(q)),
}


def build_builtin(game_id, **options):
    try:
        factory = BUILTINS[game_id]
    except KeyError:
        raise ValueError(f"unknown built-in game {game_id!r}; choose from {sorted(BUILTINS)}") from None
    return factory(**options)
