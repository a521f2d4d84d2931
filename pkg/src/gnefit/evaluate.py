"""Test-set metrics: best-response error, constraint violation, relative suboptimality."""

from __future__ import annotations

import io
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import autodiff as ad
from .bestresponse import best_responses
from .games import violation
from .learn import predict

REPORT_FIELDS = ("experiment", "config", "mode", "n_test", "mse_br", "mean_violation",
                 "max_violation", "rel_error", "predict_time", "solve_time", "train_time",
                 "relaxed_br", "local_br")
TIMING_FIELDS = ("predict_time", "solve_time", "train_time")


@dataclass
class EvalReport:
    mse_br: float = float("nan")
    mean_violation: float = 0.0
    max_violation: float = 0.0
    rel_error: float = float("nan")
    predict_time: float = 0.0
    solve_time: float = float("nan")
    train_time: float = 0.0
    relaxed_br: int = 0
    local_br: int = 0
    n_test: int = 0
    experiment: str = ""
    config: str = ""
    mode: str = "clip"
    extra: dict = field(default_factory=dict)

    def row(self):
        d = asdict(self)
        return {k: d[k] for k in REPORT_FIELDS}


def best_response_errors(game, X, P):
    """Per-sample sum_i ||x_i - xbar_i(x_{-i}, p)||^2 with slack-relaxed best responses."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    XB, _, statuses = best_responses(game, X, P)
    err = np.sum((X - XB) ** 2, axis=1)
    return err, statuses


def mse_br(game, model, P, mode="clip"):
    X = predict(game, model, P, mode)
    return float(np.mean(best_response_errors(game, X, P)[0]))


def mse_br_of(game, X, P):
    return float(np.mean(best_response_errors(game, X, P)[0]))


def violation_stats(game, X, P):
    """(mean, max) over samples of the worst shared-constraint violation."""
    v = violation(game, X, P)
    return float(np.mean(v)), float(np.max(v))


def rel_error_single_agent(game, X, P, J_star):
    """Mean of (J(x) - J*) / (1e-10 + |J*|) over the test parameters."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    P = np.atleast_2d(np.asarray(P, dtype=float))
    J = np.asarray(ad.value(game.cost(0, X, P)), dtype=float)
    J_star = np.asarray(J_star, dtype=float).ravel()
    return float(np.mean((J - J_star) / (1e-10 + np.abs(J_star))))


def time_prediction(game, model, P, repeats=5):
    """Best-of-repeats wall time per sample of the batched clip path."""
    P = np.atleast_2d(np.asarray(P, dtype=float))
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        predict(game, model, P, "clip")
        best = min(best, time.perf_counter() - t0)
    return best / P.shape[0]


def evaluate(game, model, test, mode="clip", train_time=0.0, experiment="", config="",
             with_br=True):
    """EvalReport of a trained solution model on a test dataset."""
    X = predict(game, model, test.P, mode)
    rep = EvalReport(n_test=len(test), experiment=experiment, config=config, mode=mode,
                     train_time=float(train_time))
    rep.mean_violation, rep.max_violation = violation_stats(game, X, test.P)
    if with_br:
        err, statuses = best_response_errors(game, X, test.P)
        rep.mse_br = float(np.mean(err))
        rep.relaxed_br = int(np.sum(statuses == "relaxed"))
        rep.local_br = int(np.sum(statuses == "local"))
        rep.extra["br_errors"] = err
    if game.N == 1 and test.Jbar is not None:
        rep.rel_error = rel_error_single_agent(game, X, test.P, test.Jbar[:, 0])
    rep.predict_time = time_prediction(game, model, test.P)
    rep.extra["X"] = X
    return rep


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def report_csv(reports):
    buf = io.StringIO(newline="")
    buf.write(",".join(REPORT_FIELDS) + "\n")
    for r in reports:
        row = r.row()
        buf.write(",".join(_fmt(row[k]) for k in REPORT_FIELDS) + "\n")
    return buf.getvalue()


def report_table(reports, title=""):
    """Fixed-width text table: one line per evaluated configuration."""
    cols = [("config", 28), ("mode", 12), ("v_bar", 10), ("v_max", 10), ("MSE_BR", 10),
            ("rel_err", 10), ("t_pred[s]", 10), ("t_solve[s]", 10),
            ("t_train[s]", 10)]
    lines = []
    if title:
        lines.append(title)
    lines.append(" ".join(name.rjust(w) for name, w in cols))
    lines.append("-" * (sum(w for _, w in cols) + len(cols) - 1))
    for r in reports:
        vals = [r.config or r.experiment, r.mode, f"{r.mean_violation:.2e}",
                f"{r.max_violation:.2e}", f"{r.mse_br:.2e}", f"{r.rel_error:.2e}",
                f"{r.predict_time:.2e}", f"{r.solve_time:.2e}", f"{r.train_time:.1f}"]
        lines.append(" ".join(v.rjust(w) for v, (_, w) in zip(vals, cols)))
    return "\n".join(lines) + "\n"
