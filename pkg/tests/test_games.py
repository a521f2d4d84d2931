import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnefit import autodiff as ad
from gnefit.games import (BUILTINS, CustomGame, ExpressionError, build_builtin, cost_grad,
                          dumps_game, eval_constraints, eval_cost, loads_game, lq17, nonmono18,
                          pseudo_gradient, random_lq_gnep, violation)
from oracles import central_diff_grad


def pseudo_jacobian(game, x, p, h=1e-6):
    n = game.n_x
    J = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        J[:, j] = (pseudo_gradient(game, x + e, p) - pseudo_gradient(game, x - e, p)) / (2 * h)
    return J


def test_nonmono_pseudo_gradient_jacobian_and_eigenvalues():
    g = nonmono18()
    J = pseudo_jacobian(g, np.array([0.1, -0.2]), np.array([0.3]))
    assert np.allclose(J, [[1, 2], [3, 1]], atol=1e-8)
    eig = np.sort(np.linalg.eigvalsh(0.5 * (J + J.T)))
    assert np.allclose(eig, [-1.5, 3.5], atol=1e-8)


def test_lq17_cost_by_substitution():
    g = lq17()
    # 0.5 * 1.99 - 0.67 - 0.84 (the p terms vanish at p = 0)
    assert eval_cost(g, 0, np.array([1.0, 1.0]), np.zeros(2)) == pytest.approx(-0.515, abs=1e-12)
    assert eval_cost(g, 0, np.zeros(2), np.zeros(2)) == 0.0


def test_lq17_constraints_at_origin():
    gv, hv = eval_constraints(lq17(), np.zeros(2), np.zeros(2))
    assert np.allclose(gv, [-1.27, -0.68, -0.88, -1.0, -1.19], atol=1e-15)
    assert hv.size == 0


def test_lq17_is_strongly_monotone():
    g = lq17()
    J = pseudo_jacobian(g, np.zeros(2), np.zeros(2))
    assert np.linalg.eigvalsh(0.5 * (J + J.T)).min() > 0


def test_switching_boundary_and_zero_cost():
    g = build_builtin("switching20", N=2)
    ell = g.ell
    gv, _ = eval_constraints(g, np.array([ell, ell]), np.array([2 * ell]))
    assert abs(gv[0]) <= 1e-16
    gv, _ = eval_constraints(g, np.array([0.5, 0.5]), np.array([1.0]))
    assert gv[0] == 0.0
    assert eval_cost(g, 0, np.array([0.3, 0.7]), np.array([1.0])) == pytest.approx(0.0, abs=1e-15)
    assert np.allclose([g.p_lb[0], g.p_ub[0]], [2 * ell, 2.0])


def test_nonconvex_zero_tanh_term():
    g = build_builtin("nonconvex21", N=2)
    assert eval_cost(g, 0, np.zeros(4), np.array([0.0, 1.0])) == 0.0


def test_random_lq_deterministic():
    a, b = random_lq_gnep(4, N=3), random_lq_gnep(4, N=3)
    assert dumps_game(a) == dumps_game(b)


def test_random_lq_monotone_and_strictly_feasible_origin():
    for seed in range(100):
        g = random_lq_gnep(seed, N=int(1 + seed % 3), n_i=int(1 + seed % 2), n_p=2)
        J = pseudo_jacobian(g, np.zeros(g.n_x), np.zeros(g.n_p))
        assert np.linalg.eigvalsh(0.5 * (J + J.T)).min() >= 0.1 - 1e-7
        gv, _ = eval_constraints(g, np.zeros(g.n_x), np.zeros(g.n_p))
        assert gv.max() < 0
        assert g.n_g == 20 * g.N


@pytest.mark.parametrize("gid", sorted(BUILTINS))
def test_cost_gradients_match_differences(gid):
    g = build_builtin(gid)
    rng = np.random.default_rng(1)
    lo = np.maximum(g.x_lb, -2.0)
    hi = np.minimum(g.x_ub, 2.0)
    for _ in range(100 if g.n_x <= 6 else 10):
        x = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
        p = rng.uniform(g.p_lb, g.p_ub)
        for i in range(g.N):
            fd = central_diff_grad(lambda z: eval_cost(g, i, z, p), x, 1e-6)
            an = cost_grad(g, i, x, p)
            assert np.max(np.abs(an - fd)) <= 1e-6 * max(1.0, np.max(np.abs(fd)))


@pytest.mark.parametrize("gid", sorted(BUILTINS))
def test_game_file_round_trip(gid):
    g = build_builtin(gid)
    text = dumps_game(g)
    back = loads_game(text)
    assert dumps_game(back) == text
    rng = np.random.default_rng(0)
    X = rng.uniform(np.maximum(g.x_lb, -1), np.minimum(g.x_ub, 1), size=(5, g.n_x))
    P = rng.uniform(g.p_lb, g.p_ub, size=(5, g.n_p))
    assert np.array_equal(g.costs(X, P), back.costs(X, P))
    assert np.array_equal(violation(g, X, P), violation(back, X, P))


def test_unknown_builtin_options_rejected():
    with pytest.raises(TypeError):
        build_builtin("lq17", N=3)
    with pytest.raises(ValueError):
        build_builtin("nope")
    with pytest.raises(ValueError):
        build_builtin("switching20", N=1)


def test_custom_game_expressions_and_round_trip():
    g = CustomGame([1, 1], 1, ["x[0]**2 - p[0]*x[0]", "x[1]**2 + tanh(x[0])*x[1]"], -1, 1, -1, 1,
                   ineqs=["x[0] + x[1] - 0.5"], eqs=["x[0] - x[1]"])
    X = np.array([[0.2, 0.4]])
    P = np.array([[0.5]])
    assert float(ad.value(g.cost(0, X, P))[0]) == pytest.approx(0.04 - 0.1)
    gv, hv = eval_constraints(g, X[0], P[0])
    assert gv[0] == pytest.approx(0.1) and hv[0] == pytest.approx(-0.2)
    back = loads_game(dumps_game(g))
    assert np.array_equal(back.costs(X, P), g.costs(X, P))


@pytest.mark.parametrize("src", ["__import__('os')", "x.real", "lambda: 1", "open('f')", "x[0] if 1 else 2"])
def test_expression_whitelist(src):
    with pytest.raises(ExpressionError):
        CustomGame([1], 1, [src], -1, 1, -1, 1)


def test_bad_game_file_header():
    with pytest.raises(ValueError):
        loads_game("NOT A GAME\n")


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        eval_cost(lq17(), 0, np.zeros(3), np.zeros(2))


@settings(max_examples=50, deadline=None)
@given(st.floats(-1, 1), st.floats(-1, 1), st.floats(-1, 1))
def test_violation_is_worst_positive_row(x1, x2, p):
    g = nonmono18()
    v = violation(g, np.array([[x1, x2]]), np.array([[p]]))[0]
    assert v == pytest.approx(max(0.0, x1 + x2 + 0.3 - p), abs=1e-15)
