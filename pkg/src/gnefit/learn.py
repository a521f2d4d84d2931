"""Value-function surrogates, NI-based losses and training of the solution model."""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from . import autodiff as ad
from .autodiff import NonFiniteError
from .bestresponse import best_response
from .nn import MlpArchitecture, MlpParams, dumps_model, loads_model, mlp_apply, mlp_init
from .optim import AdamConfig, LbfgsConfig, OptimizerConfig, adam, bfgs, lbfgs
from .projection import project_onto_feasible

LOSSES = ("sum", "pos_part", "smooth_pos")


@dataclass(frozen=True)
class Regularization:
    l2: float = 1e-8
    l1: float = 0.0

    def __call__(self, theta):
        out = self.l2 * ad.sum_(ad.square(theta))
        if self.l1:
            out = out + self.l1 * ad.sum_(ad.abs_(theta))
        return out


@dataclass(frozen=True)
class NiTrainConfig:
    loss: str = "smooth_pos"
    epsilon: float = 1e-4
    beta: float = 100.0
    gamma: float = 10.0
    reg: Regularization = field(default_factory=Regularization)
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    include_box: bool = True
    per_sample_penalty: bool = False

    def __post_init__(self):
        if self.loss not in LOSSES:
            raise ValueError(f"loss must be one of {LOSSES}")
        if self.epsilon <= 0 or self.beta <= 0 or self.gamma <= 0:
            raise ValueError("epsilon, beta and gamma must be positive")


def desk_optimizer(restarts=8, epochs=500, lbfgs_iters=500, lr=1e-3, base_seed=0,
                   quasi_newton="bfgs"):
    return OptimizerConfig(AdamConfig(learning_rate=lr, epochs=epochs),
                           LbfgsConfig(max_iters=lbfgs_iters), restarts, base_seed, quasi_newton)


# ---------------------------------------------------------------------------
# value-function models

@dataclass
class ValueModelSet:
    """One network per agent mapping (x_{-i}, p) to a scalar value estimate."""

    models: list

    def __len__(self):
        return len(self.models)

    def predict(self, i, X_minus_i, P):
        """Batched, traceable estimate of Jbar_i, shape (K,)."""
        m = self.models[i]
        Z = ad.concatenate([X_minus_i, P], axis=1)
        return ad.reshape(mlp_apply(m.arch, m.theta, Z), (-1,))


class ExactValueOracle:
    """Best-response values standing in for the learned surrogates (not differentiable)."""

    def __init__(self, game):
        self.game = game

    def predict(self, i, X_minus_i, P):
        X_minus_i = np.asarray(ad.value(X_minus_i))
        P = np.asarray(ad.value(P))
        return np.array([best_response(self.game, i, xm, p).value for xm, p in zip(X_minus_i, P)])


def value_inputs(game, i, X, P):
    return np.hstack([np.asarray(X)[:, game.others_index(i)], np.asarray(P)])


def _folded(arch, theta, shift, scale):
    """Map normalized-output parameters to ones whose output is shift + scale * output."""
    start = 0
    out_names = {f"W{len(arch.hidden_sizes)}", f"b{len(arch.hidden_sizes)}", "C", "d"}
    parts = []
    for name, shape in arch.array_shapes():
        n = int(np.prod(shape))
        piece = ad.getitem(theta, slice(start, start + n))
        start += n
        if name in out_names:
            piece = piece * scale
        if name == f"b{len(arch.hidden_sizes)}":
            piece = piece + shift
        parts.append(piece)
    return ad.concatenate(parts, axis=0)


def _fit(objective, theta0, opt):
    """Adam then L-BFGS from theta0; returns (theta, objective value)."""
    fg = lambda th: ad.value_and_grad(objective, th)  # noqa: E731
    f0 = fg(theta0)[0]
    theta = adam(fg, theta0, opt.adam) if opt.adam.epochs > 0 else np.array(theta0, dtype=float)
    if opt.lbfgs.max_iters > 0:
        res = (bfgs if opt.quasi_newton == "bfgs" else lbfgs)(fg, theta, opt.lbfgs)
        theta, f = res.x, res.fun
    else:
        f = fg(theta)[0]
    if f > f0:
        theta, f = np.array(theta0, dtype=float), f0
    return theta, f


def train_value_models(train, val, architectures, reg=Regularization(), opt=None,
                       game=None, log=None, normalize=True):
    """Regress each agent's value surrogate on the dataset's Jbar column.

    ``architectures`` is one MlpArchitecture or a list with one per agent.
    Training runs in output-normalized coordinates (a reparametrization of
    the same objective); the restart with the lowest validation MSE wins.
    """
    opt = opt or desk_optimizer()
    if len(train) == 0 or not train.has_values:
        raise ValueError("value training needs a nonempty dataset with Jbar columns")
    N = train.Jbar.shape[1]
    if isinstance(architectures, MlpArchitecture):
        architectures = [architectures] * N
    agent_dims = game.agent_dims if game is not None else (1,) * N
    offsets = np.cumsum((0,) + tuple(agent_dims))
    models = []
    for i in range(N):
        rest = np.r_[0:offsets[i], offsets[i + 1]:offsets[-1]].astype(int)
        Z = np.hstack([train.X[:, rest], train.P])
        Zv = np.hstack([val.X[:, rest], val.P])
        y, yv = train.Jbar[:, i], val.Jbar[:, i]
        arch = architectures[i]
        if arch.input_dim != Z.shape[1] or arch.output_dim != 1:
            raise ValueError(f"value model {i} must map {Z.shape[1]} inputs to 1 output")
        shift, scale = (float(np.mean(y)), float(np.std(y))) if normalize else (0.0, 1.0)
        if not scale > 1e-12:
            scale = 1.0

        def objective(tn, Z=Z, y=y, arch=arch, shift=shift, scale=scale):
            th = _folded(arch, tn, shift, scale)
            r = ad.reshape(mlp_apply(arch, th, Z), (-1,)) - y
            return ad.mean(ad.square(r)) + reg(th)

        best = None
        for r in range(opt.restarts):
            t0 = time.perf_counter()
            seed = opt.base_seed + r
            try:
                tn, ftrain = _fit(objective, mlp_init(arch, seed).theta, opt)
            except NonFiniteError:
                if log is not None:
                    log.append(dict(agent=i, restart=r, train_obj=np.nan, val_obj=np.nan,
                                    wall_seconds=time.perf_counter() - t0, status="non_finite"))
                continue
            th = ad.value(_folded(arch, tn, shift, scale))
            vmse = float(np.mean((mlp_apply(arch, th, Zv)[:, 0] - yv) ** 2))
            if log is not None:
                log.append(dict(agent=i, restart=r, train_obj=ftrain, val_obj=vmse,
                                wall_seconds=time.perf_counter() - t0, status="ok"))
            if best is None or vmse < best[0]:
                best = (vmse, th)
        if best is None:
            raise NonFiniteError(f"every restart of value model {i} hit non-finite values")
        models.append(MlpParams(arch, best[1]))
    return ValueModelSet(models)


# ---------------------------------------------------------------------------
# losses

def ni_loss(nu, variant="smooth_pos", eps=1e-4):
    """Per-sample NI loss; ``nu`` is (N,) or (K, N), the result is scalar or (K,)."""
    axis = -1
    if variant == "sum":
        return ad.sum_(nu, axis=axis) if np.ndim(ad.value(nu)) > 1 else ad.sum_(nu)
    if variant == "pos_part":
        t = ad.relu(nu)
    elif variant == "smooth_pos":
        if eps <= 0:
            raise ValueError("eps must be positive")
        # 0.5 (nu + sqrt(nu^2 + eps)), written as 0.5 eps / (sqrt(nu^2 + eps) - nu)
        # for negative nu so that it stays positive instead of cancelling to 0
        pos_mask = (np.asarray(ad.value(nu)) > 0).astype(float)
        a = nu * pos_mask
        b = nu * (1.0 - pos_mask)
        t = (pos_mask * (0.5 * (a + ad.sqrt(ad.square(a) + eps)))
             + (1.0 - pos_mask) * (0.5 * eps / (ad.sqrt(ad.square(b) + eps) - b)))
    else:
        raise ValueError(f"unknown loss variant {variant!r}")
    return ad.sum_(t, axis=axis) if np.ndim(ad.value(nu)) > 1 else ad.sum_(t)


def ni_terms(game, value_models, X, P):
    """Approximate NI values J_i(x, p) - Jhat_i(x_{-i}, p), shape (K, N); traceable in X."""
    cols = []
    for i in range(game.N):
        Xm = ad.getitem(X, (slice(None), game.others_index(i)))
        cols.append(game.cost(i, X, P) - value_models.predict(i, Xm, P))
    return ad.stack(cols, axis=1)


def violation_rows(game, X, P, include_box=False):
    """(K, rows) matrix of max(g, 0), |h| and optionally box excesses."""
    parts = []
    if game.n_g:
        parts.append(ad.relu(game.ineq(X, P)))
    if game.n_h:
        parts.append(ad.abs_(game.eq(X, P)))
    if include_box:
        lo = np.flatnonzero(np.isfinite(game.x_lb))
        hi = np.flatnonzero(np.isfinite(game.x_ub))
        if lo.size:
            parts.append(ad.relu(game.x_lb[lo] - ad.getitem(X, (slice(None), lo))))
        if hi.size:
            parts.append(ad.relu(ad.getitem(X, (slice(None), hi)) - game.x_ub[hi]))
    if not parts:
        return None
    return parts[0] if len(parts) == 1 else ad.concatenate(parts, axis=1)


def constraint_penalty(game, X, P, beta=100.0, gamma=10.0, include_box=False, per_sample=False):
    """(beta/gamma) log sum_k sum_rows exp(gamma * violation), as a stable log-sum-exp."""
    V = violation_rows(game, X, P, include_box)
    if V is None:
        return 0.0
    if not per_sample:
        return (beta / gamma) * ad.logsumexp(gamma * V)
    K = np.shape(ad.value(V))[0]
    terms = [ad.logsumexp(gamma * ad.getitem(V, k)) for k in range(K)]
    return (beta / gamma) * ad.mean(ad.stack(terms, axis=0))


# ---------------------------------------------------------------------------
# solution model

@dataclass
class GneModel:
    params: MlpParams
    clip: bool = True
    saturation: bool = False
    x_lb: np.ndarray | None = None
    x_ub: np.ndarray | None = None

    def raw(self, P):
        return _model_output(self.params.arch, self.params.theta, np.atleast_2d(P),
                             self.saturation, self.x_lb, self.x_ub)

    def dumps(self, meta=None):
        meta = dict(meta or {})
        meta.update(clip=int(self.clip), saturation=int(self.saturation))
        extra = {}
        if self.x_lb is not None:
            extra = {"x_lb": self.x_lb, "x_ub": self.x_ub}
        return dumps_model(self.params, meta, extra)

    @classmethod
    def loads(cls, text):
        params, meta, extra = loads_model(text)
        return cls(params, bool(int(meta.get("clip", 1))), bool(int(meta.get("saturation", 0))),
                   extra.get("x_lb"), extra.get("x_ub")), meta


def _model_output(arch, theta, P, saturation=False, lb=None, ub=None):
    out = mlp_apply(arch, theta, P)
    if saturation:
        mid, half = 0.5 * (ub + lb), 0.5 * (ub - lb)
        out = mid + half * ad.tanh((out - mid) / half)
    return out


def gne_objective(game, value_models, arch, P, cfg, single_agent=False, saturation=False):
    """Objective over theta: penalty + regularization + mean NI loss (or mean cost)."""
    P = np.asarray(P, dtype=float)

    def objective(theta):
        X = _model_output(arch, theta, P, saturation, game.x_lb, game.x_ub)
        pen = constraint_penalty(game, X, P, cfg.beta, cfg.gamma, cfg.include_box,
                                 cfg.per_sample_penalty)
        if single_agent:
            data = ad.mean(game.cost(0, X, P))
        else:
            data = ad.mean(ni_loss(ni_terms(game, value_models, X, P), cfg.loss, cfg.epsilon))
        return pen + cfg.reg(theta) + data

    return objective


def _check_saturation(game, saturation):
    if saturation and not (np.all(np.isfinite(game.x_lb)) and np.all(np.isfinite(game.x_ub))):
        raise ValueError("output saturation needs a finite decision box")


def _train_restarts(objective, val_objective, arch, opt, log, init=None):
    best = None
    for r in range(opt.restarts):
        t0 = time.perf_counter()
        seed = opt.base_seed + r
        theta0 = mlp_init(arch, seed).theta
        try:
            if init is not None:
                theta0 = init(theta0)
            theta, ftrain = _fit(objective, theta0, opt)
            fval = float(ad.value(val_objective(theta)))
            if not np.isfinite(fval):
                raise NonFiniteError("validation objective is not finite")
            status = "ok"
        except NonFiniteError:
            theta, ftrain, fval, status = None, np.nan, np.nan, "non_finite"
        if log is not None:
            log.append(dict(restart=r, train_obj=ftrain, val_obj=fval,
                            wall_seconds=time.perf_counter() - t0, status=status))
        if theta is not None and (best is None or fval < best[0]):
            best = (fval, theta)
    if best is None:
        raise NonFiniteError("every restart hit non-finite values")
    return best[1]


def train_gne(game, train, val, value_models, arch, cfg=NiTrainConfig(), clip=True,
              saturation=False, log=None):
    """Fit the solution model; the restart with the lowest validation objective is kept."""
    if arch.input_dim != game.n_p or arch.output_dim != game.n_x:
        raise ValueError(f"solution model must map {game.n_p} inputs to {game.n_x} outputs")
    _check_saturation(game, saturation)
    obj = gne_objective(game, value_models, arch, train.P, cfg, saturation=saturation)
    vobj = gne_objective(game, value_models, arch, val.P, cfg, saturation=saturation)
    theta = _train_restarts(obj, vobj, arch, cfg.optimizer, log)
    return _wrap(game, arch, theta, clip, saturation)


def _wrap(game, arch, theta, clip, saturation):
    lb = np.array(game.x_lb) if saturation else None
    ub = np.array(game.x_ub) if saturation else None
    return GneModel(MlpParams(arch, theta), clip, saturation, lb, ub)


def train_single_agent(game, train, val, arch, cfg=None, warm_start=True, clip=True,
                       saturation=False, log=None):
    """Fit x(p) by minimizing the mean cost plus the constraint penalty; no value data used.

    With ``warm_start`` and optimal decisions present in ``train.X``, each restart
    first regresses onto those decisions.
    """
    if game.N != 1:
        raise ValueError("single-agent training needs a game with one agent; "
                         "split decoupled games into separate problems")
    cfg = cfg or NiTrainConfig(loss="sum")
    if arch.input_dim != game.n_p or arch.output_dim != game.n_x:
        raise ValueError(f"solution model must map {game.n_p} inputs to {game.n_x} outputs")
    _check_saturation(game, saturation)
    obj = gne_objective(game, None, arch, train.P, cfg, single_agent=True, saturation=saturation)
    vobj = gne_objective(game, None, arch, val.P, cfg, single_agent=True, saturation=saturation)
    init = None
    if warm_start and train.X is not None:
        P, Xs = train.P, train.X

        def fit_obj(theta):
            X = _model_output(arch, theta, P, saturation, game.x_lb, game.x_ub)
            return ad.mean(ad.sum_(ad.square(X - Xs), axis=1)) + cfg.reg(theta)

        def init(theta0):
            return _fit(fit_obj, theta0, cfg.optimizer)[0]

    theta = _train_restarts(obj, vobj, arch, cfg.optimizer, log, init)
    return _wrap(game, arch, theta, clip, saturation)


# ---------------------------------------------------------------------------
# prediction

class ProjectionError(RuntimeError):
    pass


def predict(game, model, P, mode="clip"):
    """Decisions for each parameter row: raw network output, box clipping or projection."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    if P.shape[1] != game.n_p:
        raise ValueError(f"parameters have dimension {P.shape[1]}, game expects {game.n_p}")
    X = np.asarray(model.raw(P), dtype=float)
    if mode == "raw":
        return X
    X = np.clip(X, game.x_lb, game.x_ub)
    if mode == "clip":
        return X
    if mode != "project":
        raise ValueError(f"unknown prediction mode {mode!r}")
    out = np.empty_like(X)
    for k in range(X.shape[0]):
        res = project_onto_feasible(game, P[k], X[k])
        if res.status in ("infeasible", "relaxed", "unbounded"):
            raise ProjectionError(f"no feasible decision at p={P[k]} ({res.status})")
        out[k] = res.x
    return out


def with_optimizer(cfg, opt):
    return replace(cfg, optimizer=opt)
