"""Command stages: game, data, value models, solution model, evaluation, prediction, bench.

Artifacts land under ``out_dir`` in game/, data/, models/ and reports/ with
names derived from a hash of the config keys that determine them, so a
stage whose inputs are unchanged reuses what is already on disk.
"""

from __future__ import annotations

import hashlib
import io
import os
import platform
import time

import numpy as np
import scipy

from . import __version__
from .bestresponse import best_response, best_responses
from .config import RunConfig
from .dataset import Dataset, EmptyDatasetError, build_dataset, load_dataset, save_dataset
from .errors import ConfigError, DimensionError, InputFileError, NumericalError
from .evaluate import evaluate, report_csv, report_table
from .fileio import atomic_write
from .games import BUILTINS, build_builtin, dumps_game, load_game, violation
from .learn import (GneModel, NiTrainConfig, ProjectionError, Regularization, ValueModelSet,
                    predict, train_gne, train_single_agent, train_value_models)
from .nn import MlpArchitecture, dumps_model, loads_model
from .optim import AdamConfig, LbfgsConfig, NonFiniteError, OptimizerConfig

KEYS_GAME = ("game", "game_opts")
KEYS_DATA = KEYS_GAME + ("seed", "m_train", "m_val", "m_test", "data_train", "data_val", "data_test")
KEYS_OPT = ("restarts", "epochs", "learning_rate", "qn_iters", "qn_method", "lbfgs_memory")
KEYS_VALUE = KEYS_DATA + KEYS_OPT + ("value_hidden", "value_activation", "value_bypass",
                                     "value_l2", "value_l1", "value_normalize")
KEYS_GNE = KEYS_VALUE + ("value_models", "gne_hidden", "gne_activation", "gne_bypass", "gne_l2",
                         "gne_l1", "loss", "epsilon", "beta", "gamma", "include_box",
                         "per_sample_penalty", "saturation", "warm_start")
KEYS_EVAL = KEYS_GNE + ("gne_model", "eval_modes")
PATH_KEYS = ("game", "data_train", "data_val", "data_test", "value_models", "gne_model")


def versions():
    return (f"gnefit={__version__} numpy={np.__version__} scipy={scipy.__version__} "
            f"python={platform.python_version()}")


def _file_digest(path):
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()


def _read(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return fh.read()
    except FileNotFoundError:
        raise InputFileError(f"file not found: {path}") from None
    except OSError as exc:
        raise InputFileError(f"cannot read {path}: {exc}") from None


class Run:
    """One command invocation: config, output layout and manifest writing."""

    def __init__(self, cfg: RunConfig, command: str):
        self.cfg = cfg
        self.command = command
        self.out = cfg["out_dir"]
        self._game = None
        self.written = []

    # -- naming ---------------------------------------------------------------
    def digest(self, keys):
        extra = []
        for k in keys:
            if k not in PATH_KEYS:
                continue
            for path in self.cfg.list(k):
                if os.path.isfile(path):
                    extra.append(f"{k}:{_file_digest(path)}")
        return self.cfg.digest(keys, "\n".join(extra))

    def path(self, sub, name):
        return os.path.join(self.out, sub, name)

    def write(self, path, text, stage, manifest=True):
        atomic_write(path, text)
        self.written.append(path)
        if manifest:
            self.write_manifest(path, stage)
        return path

    def write_manifest(self, artifact, stage):
        header = ("gnefit manifest", f"command: {self.command}", f"artifact: {os.path.basename(artifact)}",
                  f"rerun: gnefit {stage} --config {os.path.basename(artifact)}.manifest --out_dir DIR",
                  f"versions: {versions()}",
                  "validation selection: full training objective (penalty + regularization + data term)")
        atomic_write(artifact + ".manifest", self.cfg.dumps(header))

    # -- game -------------------------------------------------------------------
    def game(self):
        if self._game is None:
            self._game = resolve_game(self.cfg)
        return self._game

    def game_stage(self):
        game = self.game()
        path = self.path("game", f"{game.name}-{self.digest(KEYS_GAME)}.game")
        self.write(path, dumps_game(game), "gen-game")
        return path

    # -- data -------------------------------------------------------------------
    def single_agent(self):
        return self.game().tag == "single_agent"

    def _kind(self, split):
        if not self.single_agent():
            return "game"
        return "params" if split == "val" else "optimal"

    def data_path(self, split):
        return self.path("data", f"{self.digest(KEYS_DATA)}-{split}.csv")

    def dataset(self, split, create=True):
        given = self.cfg[f"data_{split}"]
        if given:
            if not os.path.isfile(given):
                raise InputFileError(f"file not found: {given}")
            ds = load_dataset(given, split)
            self._check_dataset(ds, given)
            return ds
        path = self.data_path(split)
        if os.path.isfile(path):
            return load_dataset(path, split)
        if not create:
            raise InputFileError(f"dataset {path} does not exist")
        game = self.game()
        M = self.cfg.int(f"m_{split}")
        try:
            ds = build_dataset(game, M, split, self.cfg.int("seed"), self._kind(split),
                               self.cfg.int("workers"))
        except EmptyDatasetError as exc:
            raise NumericalError(str(exc)) from None
        save_dataset(ds, path)
        self.write_manifest(path, "gen-data")
        self.written.append(path)
        return ds

    def _check_dataset(self, ds, where):
        g = self.game()
        if ds.P.shape[1] != g.n_p or (ds.X is not None and ds.X.shape[1] != g.n_x):
            raise DimensionError(f"{where}: columns do not match game {g.name} "
                                 f"(n_p={g.n_p}, n_x={g.n_x})")
        if ds.Jbar is not None and ds.Jbar.shape[1] != g.N:
            raise DimensionError(f"{where}: expected {g.N} Jbar columns")

    def data_stage(self):
        return [self.dataset(s) for s in ("train", "val", "test")]

    # -- optimizer / architectures -------------------------------------------------
    def optimizer(self):
        c = self.cfg
        if c["qn_method"] not in ("bfgs", "lbfgs"):
            raise ConfigError(f"qn_method must be bfgs or lbfgs, got {c['qn_method']!r}")
        try:
            return OptimizerConfig(AdamConfig(learning_rate=c.float("learning_rate"), epochs=c.int("epochs")),
                                   LbfgsConfig(max_iters=c.int("qn_iters"), memory=c.int("lbfgs_memory")),
                                   c.int("restarts"), c.int("seed"), c["qn_method"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def arch(self, prefix, input_dim, output_dim):
        c = self.cfg
        try:
            return MlpArchitecture(input_dim, c.sizes(f"{prefix}_hidden"), output_dim,
                                   c[f"{prefix}_activation"], c.bool(f"{prefix}_bypass"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def ni_config(self):
        c = self.cfg
        try:
            return NiTrainConfig(c["loss"], c.float("epsilon"), c.float("beta"), c.float("gamma"),
                                 Regularization(c.float("gne_l2"), c.float("gne_l1")),
                                 self.optimizer(), c.bool("include_box"), c.bool("per_sample_penalty"))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    # -- value models ----------------------------------------------------------------
    def value_paths(self):
        h = self.digest(KEYS_VALUE)
        return [self.path("models", f"value-{h}-{i}.model") for i in range(self.game().N)]

    def value_models(self, create=True):
        game = self.game()
        given = self.cfg.list("value_models")
        paths = given or self.value_paths()
        if given and len(given) != game.N:
            raise ConfigError(f"value_models lists {len(given)} files, game has {game.N} agents")
        if all(os.path.isfile(p) for p in paths):
            models = []
            for i, p in enumerate(paths):
                params, _, _ = _loads_model(_read(p), p)
                want = game.n_x - game.agent_dims[i] + game.n_p
                if params.arch.input_dim != want or params.arch.output_dim != 1:
                    raise DimensionError(f"{p}: value model must map {want} inputs to 1 output")
                models.append(params)
            return ValueModelSet(models)
        if given:
            missing = [p for p in paths if not os.path.isfile(p)]
            raise InputFileError(f"file not found: {missing[0]}")
        if not create:
            raise InputFileError(f"value models {paths[0]} do not exist")
        return self.train_value_stage()

    def train_value_stage(self):
        game = self.game()
        if self.single_agent():
            raise ConfigError("single-agent problems need no value models; use train-mp")
        tr, va = self.dataset("train"), self.dataset("val")
        archs = [self.arch("value", game.n_x - game.agent_dims[i] + game.n_p, 1) for i in range(game.N)]
        reg = Regularization(self.cfg.float("value_l2"), self.cfg.float("value_l1"))
        log = []
        try:
            vm = train_value_models(tr, va, archs, reg, self.optimizer(), game, log,
                                    self.cfg.bool("value_normalize"))
        except NonFiniteError as exc:
            raise NumericalError(str(exc)) from None
        paths = self.value_paths()
        for i, (p, m) in enumerate(zip(paths, vm.models)):
            self.write(p, dumps_model(m, {"kind": "value", "agent": i, "game": game.name}), "train-value")
        h = self.digest(KEYS_VALUE)
        self.write(self.path("models", f"value-{h}.log.csv"),
                   log_csv(log, ("agent", "restart", "train_obj", "val_obj", "wall_seconds", "status")),
                   "train-value")
        return vm

    # -- solution model ----------------------------------------------------------------
    def gne_path(self):
        return self.path("models", f"gne-{self.digest(KEYS_GNE)}.model")

    def gne_model(self, create=True):
        given = self.cfg["gne_model"]
        path = given or self.gne_path()
        if os.path.isfile(path):
            model, _ = _loads_gne(_read(path), path)
            g = self.game()
            if model.params.arch.input_dim != g.n_p or model.params.arch.output_dim != g.n_x:
                raise DimensionError(f"{path}: model maps {model.params.arch.input_dim} -> "
                                     f"{model.params.arch.output_dim}, game needs {g.n_p} -> {g.n_x}")
            return model
        if given:
            raise InputFileError(f"file not found: {given}")
        if not create:
            raise InputFileError(f"solution model {path} does not exist")
        return self.train_mp_stage() if self.single_agent() else self.train_gne_stage()

    def train_gne_stage(self):
        game = self.game()
        if self.single_agent():
            raise ConfigError(f"game {game.name} is a single-agent problem; use train-mp")
        vm = self.value_models()
        tr, va = self.dataset("train"), self.dataset("val")
        log = []
        try:
            model = train_gne(game, tr, va, vm, self.arch("gne", game.n_p, game.n_x),
                              self.ni_config(), True, self.cfg.bool("saturation"), log)
        except NonFiniteError as exc:
            raise NumericalError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self._save_gne(model, log)

    def train_mp_stage(self):
        game = self.game()
        if game.N != 1:
            raise ConfigError(f"train-mp needs a single-agent problem, {game.name} has {game.N} agents")
        tr, va = self.dataset("train"), self.dataset("val")
        log = []
        try:
            model = train_single_agent(game, tr, va, self.arch("gne", game.n_p, game.n_x),
                                       self.ni_config(), self.cfg.bool("warm_start"), True,
                                       self.cfg.bool("saturation"), log)
        except NonFiniteError as exc:
            raise NumericalError(str(exc)) from None
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self._save_gne(model, log)

    def _save_gne(self, model, log):
        path = self.gne_path()
        stage = "train-mp" if self.single_agent() else "train-gne"
        self.write(path, model.dumps({"kind": "gne", "game": self.game().name}), stage)
        self.write(path.replace(".model", ".log.csv"),
                   log_csv(log, ("restart", "train_obj", "val_obj", "wall_seconds", "status")), stage)
        return model

    def train_time(self):
        """Wall seconds recorded in the training logs of this configuration (0 if absent)."""
        total = 0.0
        for p in (self.gne_path().replace(".model", ".log.csv"),
                  self.path("models", f"value-{self.digest(KEYS_VALUE)}.log.csv")):
            if os.path.isfile(p):
                total += sum(float(r["wall_seconds"]) for r in read_log(p))
        return total

    # -- evaluation ---------------------------------------------------------------------
    def eval_stage(self, experiment="", label=""):
        game = self.game()
        model = self.gne_model()
        test = self.dataset("test")
        modes = self.cfg.list("eval_modes") or ["clip"]
        for m in modes:
            if m not in ("raw", "clip", "project"):
                raise ConfigError(f"unknown eval mode {m!r}")
        reports = []
        for mode in modes:
            try:
                rep = evaluate(game, model, test, mode, self.train_time(), experiment or game.name,
                               label or self.cfg["loss"] + f"/beta={self.cfg['beta']}")
            except ProjectionError as exc:
                raise NumericalError(str(exc)) from None
            if game.N == 1:
                rep.solve_time = solver_time(game, test.P)
            reports.append(rep)
        return reports

    def eval_command(self):
        reports = self.eval_stage()
        h = self.digest(KEYS_EVAL)
        base = self.path("reports", f"eval-{h}")
        self.write(base + ".csv", report_csv(reports), "eval")
        self.write(base + ".txt", report_table(reports, f"{self.game().name} (test set)"), "eval",
                   manifest=False)
        if self.cfg.bool("figures"):
            self.figures(reports, base)
        return reports

    def figures(self, reports, base):
        from . import plotting
        game = self.game()
        test = self.dataset("test")
        for rep in reports:
            X = rep.extra["X"]
            tag = f"{base}-{rep.mode}"
            if "br_errors" in rep.extra:
                XB = best_responses(game, X, test.P)[0]
                self.written.append(plotting.best_response_scatter(X, XB, tag + "-br.png",
                                                                   f"{game.name} [{rep.mode}]"))
            self.written.append(plotting.violation_histogram(violation(game, X, test.P),
                                                             tag + "-viol.png", f"{game.name} [{rep.mode}]"))
            if game.n_p == 1:
                ref = None
                if game.name == "nonmono18":
                    from .games import nonmono18_solution
                    ref = nonmono18_solution(test.P[:, 0])
                self.written.append(plotting.solution_map(test.P, X, tag + "-map.png", ref,
                                                          f"{game.name} [{rep.mode}]"))

    # -- prediction ---------------------------------------------------------------------
    def predict_command(self):
        src = self.cfg["predict_input"]
        if not src:
            raise ConfigError("predict needs predict_input")
        P = read_parameter_csv(_read(src), src)
        game = self.game()
        if P.shape[1] != game.n_p:
            raise DimensionError(f"{src}: rows have {P.shape[1]} values, game expects n_p={game.n_p}")
        model = self.gne_model()
        mode = self.cfg["predict_mode"]
        if mode not in ("raw", "clip", "project"):
            raise ConfigError(f"unknown predict_mode {mode!r}")
        try:
            X = predict(game, model, P, mode)
        except ProjectionError as exc:
            raise NumericalError(str(exc)) from None
        out = self.cfg["predict_output"] or self.path(
            "reports", f"predict-{self.digest(KEYS_EVAL + ('predict_input', 'predict_mode'))}.csv")
        buf = io.StringIO(newline="")
        buf.write(",".join(f"x_{j}" for j in range(game.n_x)) + "\n")
        for row in X:
            buf.write(",".join(format(float(v), ".17g") for v in row) + "\n")
        self.write(out, buf.getvalue(), "predict")
        return out, X


def _loads_model(text, where):
    try:
        return loads_model(text)
    except (ValueError, KeyError) as exc:
        raise InputFileError(f"{where}: {exc}") from None


def _loads_gne(text, where):
    try:
        return GneModel.loads(text)
    except (ValueError, KeyError) as exc:
        raise InputFileError(f"{where}: {exc}") from None


def resolve_game(cfg):
    gid = cfg["game"]
    opts = cfg.options("game_opts")
    if gid in BUILTINS:
        try:
            return build_builtin(gid, **opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"game {gid}: {exc}") from None
    if os.path.isfile(gid):
        if opts:
            raise ConfigError("game_opts only apply to built-in games")
        try:
            return load_game(gid)
        except (ValueError, KeyError) as exc:
            raise InputFileError(f"{gid}: {exc}") from None
    if os.sep in gid or "." in os.path.basename(gid):
        raise InputFileError(f"game file not found: {gid}")
    raise ConfigError(f"game {gid!r} is neither a built-in ({', '.join(sorted(BUILTINS))}) nor a file")


def solver_time(game, P, limit=200):
    """Wall time per parameter of the internal optimal-decision solve (single-agent)."""
    P = np.atleast_2d(P)[:limit]
    t0 = time.perf_counter()
    for p in P:
        best_response(game, 0, np.zeros(0), p)
    return (time.perf_counter() - t0) / P.shape[0]


def log_csv(rows, cols):
    buf = io.StringIO(newline="")
    buf.write(",".join(cols) + "\n")
    for r in rows:
        vals = []
        for c in cols:
            v = r.get(c, "")
            vals.append(format(float(v), ".17g") if isinstance(v, (float, np.floating)) else str(v))
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def read_log(path):
    lines = _read(path).splitlines()
    cols = lines[0].split(",")
    return [dict(zip(cols, ln.split(","))) for ln in lines[1:] if ln]


def read_parameter_csv(text, where=""):
    rows = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        fields = [f.strip() for f in line.split(",")]
        try:
            rows.append([float(f) for f in fields])
        except ValueError:
            if lineno == 1 and not rows:
                continue  # header
            raise InputFileError(f"{where}:{lineno}: non-numeric value in {line!r}") from None
    if not rows:
        raise InputFileError(f"{where}: no parameter rows")
    if len({len(r) for r in rows}) != 1:
        raise DimensionError(f"{where}: rows have differing lengths")
    return np.array(rows, dtype=float)


# ---------------------------------------------------------------------------
# bench presets

def _hidden(*sizes):
    return ",".join(str(int(s)) for s in sizes)


def bench_preset(name, opts):
    """(config overrides, list of per-run overrides) for a named experiment."""
    opts = dict(opts)

    def take(key, default, conv=int):
        try:
            return conv(opts.pop(key, default))
        except ValueError:
            raise ConfigError(f"bench option {key} has invalid value") from None

    if name == "nonmono18":
        base = dict(game="nonmono18", game_opts="", value_hidden="10,5", value_activation="tanh",
                    gne_hidden="5,3", gne_activation="leaky_relu", gne_bypass="false",
                    value_l2="1e-8", gne_l2="1e-8")
        grid = [{}]
    elif name == "lq17":
        losses = take("losses", "sum,pos_part,smooth_pos", str).split(",")
        betas = take("betas", "1,10,100,1000", str).split(",")
        base = dict(game="lq17", game_opts="", value_hidden="30,20", value_activation="swish",
                    gne_hidden="10,5", gne_activation="relu", gne_bypass="true",
                    value_l2="1e-8", gne_l2="1e-8")
        grid = [dict(loss=l, beta=b) for l in losses for b in betas]
    elif name == "switching":
        N = take("N", 2)
        base = dict(game="switching20", game_opts=f"N={N}", m_train=str(1000 * (N - 1)),
                    m_val=str(1000 * (N - 1)), m_test="1000", value_hidden="10,5",
                    value_activation="swish", gne_hidden=_hidden(2 * N, 2 * N), gne_activation="relu",
                    gne_bypass="false", value_l2="1e-8", gne_l2="1e-8", eval_modes="clip,project")
        grid = [{}]
    elif name == "random_lq":
        N, n_p, inst = take("N", 2), take("n_p", 2), take("instance", 0)
        s = N + n_p
        m = str(1000 * n_p)
        base = dict(game="random_lq", game_opts=f"N={N},n_p={n_p},seed={inst}", m_train=m, m_val=m,
                    m_test=m, value_hidden=_hidden(15 * s, 10 * s), value_activation="swish",
                    gne_hidden=_hidden(5 * s, 3 * s), gne_activation="relu", gne_bypass="true",
                    value_l2="1e-4", gne_l2="1e-4")
        grid = [{}]
    elif name == "qcqp19":
        base = dict(game="qcqp19", game_opts=f"seed={take('instance', 19)}", value_hidden="30,20",
                    value_activation="swish", gne_hidden="10,5", gne_activation="relu",
                    gne_bypass="true", value_l2="1e-8", gne_l2="1e-8")
        grid = [{}]
    elif name == "nonconvex21":
        N = take("N", 2)
        base = dict(game="nonconvex21", game_opts=f"N={N}", m_train=str(take("m_train", 1000)),
                    m_val="1000", m_test="1000", value_hidden="10,5", value_activation="swish",
                    gne_hidden="10,5", gne_activation="relu", gne_bypass="false",
                    value_l2="1e-8", gne_l2="1e-8")
        grid = [{}]
    elif name in ("mpqp", "mpqcqp"):
        inst = take("instance", 0)
        M = str(take("M", 5000 if name == "mpqp" else 1000))
        base = dict(game=name, game_opts=f"seed={inst}", m_train=M, m_val=M, m_test=M,
                    gne_hidden="30,20", gne_activation="relu", gne_bypass="true", gne_l2="1e-8",
                    loss="sum", beta="300", warm_start="true")
        grid = [{}]
    else:
        raise ConfigError(f"unknown bench experiment {name!r}; choose from {', '.join(BENCHES)}")
    if opts:
        raise ConfigError(f"unknown option(s) for bench {name}: {', '.join(sorted(opts))}")
    return base, grid


BENCHES = ("nonmono18", "lq17", "switching", "random_lq", "qcqp19", "nonconvex21", "mpqp", "mpqcqp")


def bench(cfg, name, opts):
    """Run a named experiment end to end; returns (report rows, csv path)."""
    base, grid = bench_preset(name, opts)
    cfg = cfg.copy().update(base)
    reports = []
    runs = []
    for over in grid:
        rcfg = cfg.copy().update(over)
        run = Run(rcfg, "bench " + name)
        label = ",".join(f"{k}={v}" for k, v in over.items()) or rcfg["loss"] + f"/beta={rcfg['beta']}"
        reps = run.eval_stage(name, label)
        reports.extend(reps)
        runs.append((run, reps))
    tag = "-".join([name] + [f"{k}{v}" for k, v in sorted(opts.items())])
    h = cfg.digest(KEYS_EVAL, "\n".join(f"{k}={v}" for k, v in sorted(opts.items())) + repr(grid))
    stage = " ".join(["bench", name] + [f"{k}={v}" for k, v in sorted(opts.items())])
    top = Run(cfg, stage)
    base_path = top.path("reports", f"bench-{tag}-{h}")
    top.write(base_path + ".csv", report_csv(reports), stage)
    title = f"bench {name} " + " ".join(f"{k}={v}" for k, v in sorted(opts.items()))
    top.write(base_path + ".txt", report_table(reports, title), stage, manifest=False)
    if cfg.bool("figures"):
        for i, (run, reps) in enumerate(runs):
            run.figures(reps, f"{base_path}-{i}")
    return reports, base_path + ".csv"


def ensure_dataset(ds):
    if not isinstance(ds, Dataset):
        raise TypeError("expected a Dataset")
    return ds
