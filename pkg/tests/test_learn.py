import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gnefit import autodiff as ad
from gnefit.dataset import Dataset, build_dataset
from gnefit.games import CustomGame, build_builtin, lq17, nonmono18, nonmono18_solution
from gnefit.learn import (ExactValueOracle, GneModel, NiTrainConfig, ProjectionError, Regularization,
                          ValueModelSet, constraint_penalty, desk_optimizer, gne_objective, ni_loss,
                          ni_terms, predict, train_gne, train_single_agent, train_value_models,
                          violation_rows)
from gnefit.nn import MlpArchitecture, MlpParams, mlp_init
from gnefit.projection import is_feasible
from checks import loss_identities
from oracles import pos

SMALL = desk_optimizer(restarts=2, epochs=150, lbfgs_iters=150)


def _value_dataset(Z, y):
    # value regression only reads X, P and Jbar; agent 0 of a 2-agent game sees x_1 and p
    K = Z.shape[0]
    X = np.column_stack([np.zeros(K), Z[:, :1]])
    return Dataset(Z[:, 1:], X, np.column_stack([y, y]))


# -- value models ----------------------------------------------------------------

def test_constant_targets_are_fit():
    rng = np.random.default_rng(0)
    Z = rng.uniform(-1, 1, size=(200, 2))
    ds = _value_dataset(Z, np.full(200, 2.5))
    vm = train_value_models(ds, ds, MlpArchitecture(2, (4,), 1, "tanh"), Regularization(1e-12), SMALL)
    pred = vm.predict(0, Z[:, :1], Z[:, 1:])
    assert np.max(np.abs(pred - 2.5)) <= 1e-3


def test_affine_target_realized_by_bypass():
    rng = np.random.default_rng(1)
    Z = rng.uniform(-1, 1, size=(300, 2))
    y = 3.0 * Z[:, 0] - 2.0 * Z[:, 1] + 0.5
    ds = _value_dataset(Z, y)
    vm = train_value_models(ds, ds, MlpArchitecture(2, (3,), 1, "tanh", True), Regularization(1e-12), SMALL)
    assert np.mean((vm.predict(0, Z[:, :1], Z[:, 1:]) - y) ** 2) <= 1e-6


def test_huge_regularization_shrinks_parameters():
    rng = np.random.default_rng(2)
    Z = rng.uniform(-1, 1, size=(100, 2))
    ds = _value_dataset(Z, Z[:, 0] ** 2 + 1.0)
    vm = train_value_models(ds, ds, MlpArchitecture(2, (4,), 1, "tanh"), Regularization(1e6), SMALL)
    assert np.linalg.norm(vm.models[0].theta) <= 1e-2


def test_value_training_needs_values():
    ds = Dataset(np.zeros((3, 1)))
    with pytest.raises(ValueError):
        train_value_models(ds, ds, MlpArchitecture(2, (), 1), Regularization(), SMALL)


# -- NI terms and losses -----------------------------------------------------------

def test_exact_values_at_exact_map_give_zero_ni_terms():
    g = nonmono18()
    P = np.linspace(-1, 1, 41)[:, None]
    nu = np.asarray(ni_terms(g, ExactValueOracle(g), nonmono18_solution(P[:, 0]), P))
    assert np.max(np.abs(nu)) <= 1e-7


class _CostOracle:
    """Jhat_i equal to J_i at the given decisions, optionally shifted."""

    def __init__(self, game, X, shift=0.0):
        self.game, self.X, self.shift = game, X, shift

    def predict(self, i, X_minus_i, P):
        return self.game.costs(self.X, P)[:, i] + self.shift


def test_degenerate_value_models_and_shift():
    g = lq17()
    rng = np.random.default_rng(0)
    X = rng.uniform(-1, 1, size=(10, 2))
    P = rng.uniform(-1, 1, size=(10, 2))
    assert np.array_equal(np.asarray(ni_terms(g, _CostOracle(g, X), X, P)), np.zeros((10, 2)))
    exact = ExactValueOracle(g)
    base = np.asarray(ni_terms(g, exact, X, P))

    class Optimistic(ExactValueOracle):
        def predict(self, i, Xm, P):
            return super().predict(i, Xm, P) - 1.0
    shifted = np.asarray(ni_terms(g, Optimistic(g), X, P))
    assert np.allclose(shifted - base, 1.0, atol=1e-12)


def test_loss_examples():
    nu = np.array([1.0, -2.0])
    assert float(ni_loss(nu, "sum")) == -1.0
    assert float(ni_loss(nu, "pos_part")) == 1.0
    assert float(ni_loss(np.zeros(2), "smooth_pos", 1e-4)) == pytest.approx(0.01, abs=1e-15)
    with pytest.raises(ValueError):
        ni_loss(nu, "other")


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), st.floats(1e-12, 1.0))
def test_smooth_loss_bounds(nu, eps):
    nu = np.array(nu)
    sp = float(ni_loss(nu, "smooth_pos", eps))
    pp = float(ni_loss(nu, "pos_part"))
    assert pp >= 0 and sp > 0
    assert pp - 1e-9 * max(1, pp) <= sp <= pp + len(nu) * np.sqrt(eps) / 2 + 1e-9 * max(1, pp)


def test_penalty_identities_exact():
    dev = loss_identities(seed=4)
    assert max(dev.values()) <= 1e-12 * 1e3  # absolute error on values of size up to ~1e3
    assert dev["floor"] <= 1e-12 and dev["smooth_bound"] <= 1e-12


def test_penalty_floor_counts_box_rows():
    g = nonmono18()
    P = np.linspace(-1, 1, 7)[:, None]
    X = nonmono18_solution(P[:, 0])
    pen = float(constraint_penalty(g, X, P, 100.0, 10.0, include_box=True))
    assert pen == pytest.approx(10.0 * np.log(7 * 5), abs=1e-12)


def test_per_sample_penalty_matches_direct_formula():
    g = lq17()
    rng = np.random.default_rng(5)
    X = rng.uniform(-2, 2, size=(6, 2))
    P = rng.uniform(-1, 1, size=(6, 2))
    V = np.asarray(violation_rows(g, X, P, True))
    direct = np.mean([10.0 * np.log(np.sum(np.exp(10.0 * v))) for v in V])
    assert float(constraint_penalty(g, X, P, 100.0, 10.0, True, True)) == pytest.approx(direct, rel=1e-13)
    assert np.allclose(V[:, :5], pos(g.A @ X.T - (g.b[:, None] + g.S @ P.T)).T, rtol=0, atol=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        NiTrainConfig(loss="max")
    with pytest.raises(ValueError):
        NiTrainConfig(epsilon=0)
    with pytest.raises(ValueError):
        NiTrainConfig(beta=-1)


# -- training objective ---------------------------------------------------------------

def test_training_objective_gradient_matches_differences():
    g = lq17()
    rng = np.random.default_rng(3)
    vm = ValueModelSet([mlp_init(MlpArchitecture(3, (4,), 1, "tanh"), s) for s in (0, 1)])
    P = rng.uniform(-1, 1, size=(20, 2))
    arch = MlpArchitecture(2, (5,), 2, "tanh", True)
    for loss in ("sum", "smooth_pos"):
        obj = gne_objective(g, vm, arch, P, NiTrainConfig(loss=loss, reg=Regularization(1e-3)))
        for k in range(5):
            theta = mlp_init(arch, k).theta
            _, grad = ad.value_and_grad(obj, theta)
            d = rng.normal(size=theta.size)
            h = 1e-5
            fd = (float(ad.value(obj(theta + h * d))) - float(ad.value(obj(theta - h * d)))) / (2 * h)
            assert abs(grad @ d - fd) <= 1e-5 * max(1.0, abs(fd))


def test_degenerate_schedule_returns_initial_model():
    g = nonmono18()
    ds = build_dataset(g, 20, "train", 0)
    vm = ValueModelSet([mlp_init(MlpArchitecture(2, (3,), 1, "tanh"), s) for s in (0, 1)])
    arch = MlpArchitecture(1, (3,), 2, "leaky_relu")
    cfg = NiTrainConfig(optimizer=desk_optimizer(restarts=1, epochs=0, lbfgs_iters=0))
    model = train_gne(g, ds, ds, vm, arch, cfg)
    assert np.array_equal(model.params.theta, mlp_init(arch, 0).theta)


def test_training_descends_logs_and_is_deterministic():
    g = nonmono18()
    tr = build_dataset(g, 40, "train", 0)
    va = build_dataset(g, 40, "val", 0)
    vm = ValueModelSet([mlp_init(MlpArchitecture(2, (3,), 1, "tanh"), s) for s in (0, 1)])
    arch = MlpArchitecture(1, (3,), 2, "leaky_relu")
    cfg = NiTrainConfig(optimizer=desk_optimizer(restarts=2, epochs=30, lbfgs_iters=30))
    log = []
    a = train_gne(g, tr, va, vm, arch, cfg, log=log)
    b = train_gne(g, tr, va, vm, arch, cfg)
    assert np.array_equal(a.params.theta, b.params.theta)
    assert [r["restart"] for r in log] == [0, 1]
    obj = gne_objective(g, vm, arch, tr.P, cfg)
    chosen = int(np.argmin([r["val_obj"] for r in log]))
    f0 = float(ad.value(obj(mlp_init(arch, chosen).theta)))
    assert float(ad.value(obj(a.params.theta))) <= f0


# -- single-agent mode ------------------------------------------------------------

def _one_d(with_upper=False):
    return CustomGame([1], 1, ["(x[0] - p[0])**2"], -1, 1, -1, 1,
                      ineqs=["x[0]"] if with_upper else [], name="oned")


@pytest.mark.parametrize("with_upper", [False, True])
def test_single_agent_learns_analytic_map(with_upper):
    g = _one_d(with_upper)
    tr = build_dataset(g, 200, "train", 0, "params")
    va = build_dataset(g, 200, "val", 0, "params")
    assert tr.X is None and tr.Jbar is None
    arch = MlpArchitecture(1, (4,), 1, "relu", True)
    cfg = NiTrainConfig(loss="sum", reg=Regularization(1e-10),
                        optimizer=desk_optimizer(restarts=2, epochs=300, lbfgs_iters=400))
    model = train_single_agent(g, tr, va, arch, cfg)
    p = np.linspace(-1, 1, 101)[:, None]
    x = predict(g, model, p, "clip")[:, 0]
    target = np.minimum(p[:, 0], 0.0) if with_upper else p[:, 0]
    assert np.max(np.abs(x - target)) <= (5e-3 if with_upper else 1e-3)


def test_single_agent_rejects_multi_agent_games():
    g = nonmono18()
    ds = build_dataset(g, 5, "train", 0)
    with pytest.raises(ValueError):
        train_single_agent(g, ds, ds, MlpArchitecture(1, (), 2))


# -- prediction -----------------------------------------------------------------------

def _random_model(game, seed, scale=3.0):
    arch = MlpArchitecture(game.n_p, (6,), game.n_x, "tanh", True)
    theta = mlp_init(arch, seed).theta * scale
    return GneModel(MlpParams(arch, theta))


def test_clip_keeps_outputs_in_box():
    g = lq17()
    P = np.random.default_rng(0).uniform(-1, 1, size=(10_000, 2))
    X = predict(g, _random_model(g, 0), P, "clip")
    assert np.all(X >= g.x_lb) and np.all(X <= g.x_ub)


def test_projection_feasible_on_lq17():
    g = lq17()
    P = np.random.default_rng(1).uniform(-1, 1, size=(200, 2))
    X = predict(g, _random_model(g, 1), P, "project")
    for x, p in zip(X, P):
        assert is_feasible(g, x, p, 1e-8)


def test_projection_idempotent_on_feasible_output():
    g = lq17()
    model = _random_model(g, 2, scale=0.0)  # outputs the zero decision, strictly feasible
    P = np.random.default_rng(2).uniform(-1, 1, size=(20, 2))
    raw = predict(g, model, P, "raw")
    assert np.max(np.abs(predict(g, model, P, "project") - raw)) <= 1e-10


def test_prediction_errors():
    g = lq17()
    with pytest.raises(ValueError):
        predict(g, _random_model(g, 0), np.zeros((2, 3)))
    with pytest.raises(ValueError):
        predict(g, _random_model(g, 0), np.zeros((2, 2)), "snap")
    bad = CustomGame([1], 1, ["x[0]**2"], 0, 1, -1, 1, ineqs=["x[0]**2 + 1"])
    with pytest.raises(ProjectionError):
        predict(bad, _random_model(bad, 0), np.zeros((1, 1)), "project")


def test_model_file_round_trip_with_saturation():
    g = lq17()
    arch = MlpArchitecture(2, (3,), 2, "relu")
    m = GneModel(MlpParams(arch, mlp_init(arch, 0).theta), True, True, g.x_lb, g.x_ub)
    back, meta = GneModel.loads(m.dumps({"kind": "gne"}))
    assert meta["kind"] == "gne" and back.saturation
    P = np.random.default_rng(0).uniform(-1, 1, size=(5, 2))
    assert np.array_equal(back.raw(P), m.raw(P))
    assert np.all(np.abs(m.raw(P * 100)) < 1.0 + 1e-12)
