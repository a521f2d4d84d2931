"""Independent reference computations used by the tests (no library solver code)."""

from itertools import combinations

import numpy as np


def central_diff_grad(f, x, h=1e-5):
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        g[j] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def enumerate_qp(H, f, A, b):
    """min 0.5 x'Hx + f'x s.t. Ax <= b by trying every active set (tiny problems only)."""
    n, m = H.shape[0], A.shape[0]
    best_x, best_obj = None, np.inf
    for r in range(min(n, m) + 1):
        for S in combinations(range(m), r):
            S = list(S)
            K = np.block([[H, A[S].T], [A[S], np.zeros((r, r))]])
            rhs = np.concatenate([-f, b[S]])
            if np.linalg.matrix_rank(K) < n + r:
                continue
            sol = np.linalg.solve(K, rhs)
            x, lam = sol[:n], sol[n:]
            if np.all(A @ x <= b + 1e-9) and np.all(lam >= -1e-9):
                obj = 0.5 * x @ H @ x + f @ x
                if obj < best_obj - 1e-12:
                    best_x, best_obj = x, obj
    return best_x


def grid_argmin(fun, lo, hi, step):
    grid = np.arange(lo, hi + step / 2, step)
    vals = np.array([fun(v) for v in grid])
    return grid[int(np.argmin(vals))]


def numpy_mlp(arrays, x, activation, n_hidden, bypass):
    acts = {
        "relu": lambda z: np.maximum(z, 0.0),
        "leaky_relu": lambda z: np.where(z > 0, z, 0.01 * z),
        "tanh": np.tanh,
        "swish": lambda z: z / (1.0 + np.exp(-z)),
    }
    h = np.asarray(x, dtype=float)
    for k in range(n_hidden):
        h = acts[activation](h @ arrays[f"W{k}"] + arrays[f"b{k}"])
    out = h @ arrays[f"W{n_hidden}"] + arrays[f"b{n_hidden}"]
    if bypass:
        out = out + x @ arrays["C"] + arrays["d"]
    return out


def lhs_stratified(S, lb, ub):
    """True when every coordinate puts exactly one sample in each of the M equal bins."""
    S = np.asarray(S)
    M = S.shape[0]
    for j in range(S.shape[1]):
        u = (S[:, j] - lb[j]) / (ub[j] - lb[j])
        bins = np.minimum(np.floor(u * M).astype(int), M - 1)
        if sorted(bins.tolist()) != list(range(M)):
            return False
    return True


def pos(v):
    return np.maximum(v, 0.0)
