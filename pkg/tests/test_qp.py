import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnefit.games import CustomGame, LQGame
from gnefit.projection import is_feasible, project_onto_feasible
from gnefit.qp import QpProblem, solve_qcqp, solve_qp
from checks import qp_vs_enumeration
from oracles import enumerate_qp


def test_box_active_lower_bound():
    res = solve_qp(QpProblem(np.eye(1), [1.0], lb=[0.0], ub=[1.0]))
    assert res.status == "optimal" and res.x[0] == 0.0


def test_box_interior_stationary_point():
    res = solve_qp(QpProblem(np.eye(1), [-0.5], lb=[-1.0], ub=[1.0]))
    assert abs(res.x[0] - 0.5) <= 1e-12


def test_random_qps_match_active_set_enumeration():
    assert qp_vs_enumeration(200, seed=5)["max_diff"] <= 1e-7


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 10**6))
def test_kkt_residual_small_at_solution(n, m, seed):
    rng = np.random.default_rng(seed)
    L = rng.normal(size=(n, n))
    H = L @ L.T + 0.1 * np.eye(n)
    A = rng.normal(size=(m, n))
    b = rng.uniform(0.1, 2, size=m)
    f = rng.normal(size=n)
    res = solve_qp(QpProblem(H, f, A, b))
    assert res.status == "optimal"
    assert np.all(A @ res.x <= b + 1e-9)
    ref = enumerate_qp(H, f, A, b)
    assert res.objective <= 0.5 * ref @ H @ ref + f @ ref + 1e-9


def test_infeasible_hard_constraints_reported():
    # x <= -1 and x >= 1
    res = solve_qp(QpProblem(np.eye(1), [0.0], np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0])))
    assert res.status == "infeasible"


def test_slack_relaxes_infeasible_rows():
    res = solve_qp(QpProblem(np.eye(1), [0.0], np.array([[1.0], [-1.0]]), np.array([-1.0, -1.0]),
                             slack_rho=1e4))
    assert res.status == "relaxed" and res.slack == pytest.approx(1.0, abs=1e-6)


def test_nonsymmetric_hessian_rejected():
    with pytest.raises(ValueError):
        QpProblem(np.array([[1.0, 1.0], [0.0, 1.0]]), [0.0, 0.0])


def test_qcqp_ball_constraint():
    # min ||x - (2, 0)||^2 s.t. ||x||^2 <= 1  -> (1, 0)
    quads = [(2 * np.eye(2), np.zeros(2), -1.0)]
    res = solve_qcqp(2 * np.eye(2), np.array([-4.0, 0.0]), np.zeros((0, 2)), np.zeros(0), quads,
                     np.full(2, -5.0), np.full(2, 5.0))
    assert res.status == "optimal"
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-8)


def _halfspace_game(a, b, s, lb, ub, n_p=1):
    n = len(a)
    return LQGame([n], np.eye(n)[None], np.zeros((1, n)), np.zeros((1, n, n_p)), np.array([a]),
                  np.array([b]), np.array([s]), -1.0, 1.0, lb, ub)


def test_projection_of_feasible_point_is_identity():
    g = _halfspace_game([1.0, 1.0], 1.0, [0.0], -1.0, 1.0)
    x = np.array([0.2, -0.4])
    assert np.array_equal(project_onto_feasible(g, [0.0], x).x, x)


def test_projection_onto_halfspace_and_box():
    g = _halfspace_game([1.0, 1.0], 1.0, [0.0], -1.0, 1.0)
    res = project_onto_feasible(g, [0.0], np.array([2.0, 2.0]))
    assert res.status == "exact"
    assert np.allclose(res.x, [0.5, 0.5], atol=1e-12)


def test_projection_onto_parametric_halfline():
    g = _halfspace_game([1.0], 0.0, [1.0], -5.0, 5.0)  # x <= p
    res = project_onto_feasible(g, [0.0], np.array([1.0]))
    assert abs(res.x[0]) <= 1e-12


def test_projection_on_expression_game():
    g = CustomGame([2], 1, ["x[0]**2 + x[1]**2"], -1, 1, -2.0, 2.0, ineqs=["x[0]**2 + x[1]**2 - 1"])
    res = project_onto_feasible(g, [0.0], np.array([2.0, 0.0]))
    assert np.allclose(res.x, [1.0, 0.0], atol=1e-6)
    assert is_feasible(g, res.x, np.array([0.0]), tol=1e-8)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10**6))
def test_projection_is_feasible_and_no_farther_than_any_feasible_point(seed):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(3, 2))
    g = LQGame([2], np.eye(2)[None], np.zeros((1, 2)), np.zeros((1, 2, 1)), A,
               rng.uniform(0.1, 1.0, size=3), np.zeros((3, 1)), -1.0, 1.0, -1.0, 1.0)
    x_ref = rng.uniform(-3, 3, size=2)
    res = project_onto_feasible(g, [0.0], x_ref)
    assert is_feasible(g, res.x, np.array([0.0]), tol=1e-9)
    # random feasible candidates are never closer
    cand = rng.uniform(-1, 1, size=(500, 2))
    cand = cand[np.all(cand @ A.T <= g.b, axis=1)]
    d = np.linalg.norm(res.x - x_ref)
    assert np.all(np.linalg.norm(cand - x_ref, axis=1) >= d - 1e-9)
