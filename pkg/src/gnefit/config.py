"""Flat key=value run configuration with documented defaults."""

from __future__ import annotations

import hashlib

from .errors import ConfigError

# key: (default, description)
DEFAULTS = {
    "game": ("nonmono18", "built-in game id or path to a game file"),
    "game_opts": ("", "built-in options as comma-separated k=v, e.g. N=3,seed=1"),
    "seed": ("0", "base seed for datasets and training restarts"),
    "m_train": ("1000", "training samples"),
    "m_val": ("1000", "validation samples"),
    "m_test": ("1000", "test samples"),
    "data_train": ("", "existing training CSV (empty: generate)"),
    "data_val": ("", "existing validation CSV (empty: generate)"),
    "data_test": ("", "existing test CSV (empty: generate)"),
    "value_hidden": ("10,5", "hidden layer sizes of the value models"),
    "value_activation": ("tanh", "relu | leaky_relu | tanh | swish"),
    "value_bypass": ("false", "linear input-output bypass in the value models"),
    "value_l2": ("1e-8", "l2 weight on value-model parameters"),
    "value_l1": ("0", "l1 weight on value-model parameters"),
    "value_normalize": ("true", "train value models in output-normalized coordinates"),
    "gne_hidden": ("5,3", "hidden layer sizes of the solution model"),
    "gne_activation": ("leaky_relu", "relu | leaky_relu | tanh | swish"),
    "gne_bypass": ("false", "linear input-output bypass in the solution model"),
    "gne_l2": ("1e-8", "l2 weight on solution-model parameters"),
    "gne_l1": ("0", "l1 weight on solution-model parameters"),
    "loss": ("smooth_pos", "sum | pos_part | smooth_pos"),
    "epsilon": ("1e-4", "smoothing of the smooth_pos loss"),
    "beta": ("100", "constraint penalty weight"),
    "gamma": ("10", "constraint penalty sharpness"),
    "include_box": ("true", "count decision-box rows in the training penalty"),
    "per_sample_penalty": ("false", "one log-sum-exp per sample instead of one per batch"),
    "saturation": ("false", "scaled tanh on the solution-model output"),
    "restarts": ("8", "training restarts (seeds seed+0 .. seed+restarts-1)"),
    "epochs": ("500", "Adam epochs per restart"),
    "learning_rate": ("0.001", "Adam learning rate"),
    "qn_iters": ("500", "quasi-Newton iterations per restart"),
    "qn_method": ("bfgs", "bfgs | lbfgs"),
    "lbfgs_memory": ("10", "memory of the lbfgs method"),
    "warm_start": ("true", "single-agent mode: regress on optimal decisions first"),
    "value_models": ("", "comma-separated value model files (empty: train or reuse)"),
    "gne_model": ("", "solution model file (empty: train or reuse)"),
    "eval_modes": ("clip", "comma-separated prediction modes to evaluate: raw, clip, project"),
    "predict_input": ("", "CSV of parameter rows for the predict command"),
    "predict_output": ("", "CSV written by predict (empty: reports/predict-<hash>.csv)"),
    "predict_mode": ("clip", "raw | clip | project"),
    "out_dir": ("runs", "output root holding game/, data/, models/, reports/"),
    "workers": ("1", "processes for dataset generation and evaluation"),
    "figures": ("true", "render PNG figures next to reports"),
}

BOOL_TRUE = {"1", "true", "yes", "on"}
BOOL_FALSE = {"0", "false", "no", "off"}


class RunConfig:
    """String-valued configuration with typed accessors; unknown keys are rejected."""

    def __init__(self, values=None):
        self._values = {k: v for k, (v, _) in DEFAULTS.items()}
        for k, v in (values or {}).items():
            self.set(k, v)

    def set(self, key, value):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        self._values[key] = str(value).strip()

    def update(self, values):
        for k, v in values.items():
            self.set(k, v)
        return self

    def copy(self):
        return RunConfig(dict(self._values))

    def __getitem__(self, key):
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        return self._values[key]

    def str(self, key):
        return self[key]

    def int(self, key):
        try:
            return int(self[key])
        except ValueError:
            raise ConfigError(f"{key} must be an integer, got {self[key]!r}") from None

    def float(self, key):
        try:
            return float(self[key])
        except ValueError:
            raise ConfigError(f"{key} must be a number, got {self[key]!r}") from None

    def bool(self, key):
        v = self[key].lower()
        if v in BOOL_TRUE:
            return True
        if v in BOOL_FALSE:
            return False
        raise ConfigError(f"{key} must be true/false, got {self[key]!r}")

    def sizes(self, key):
        v = self[key]
        if not v:
            return ()
        try:
            return tuple(int(s) for s in v.split(","))
        except ValueError:
            raise ConfigError(f"{key} must be comma-separated integers, got {v!r}") from None

    def list(self, key):
        return [s.strip() for s in self[key].split(",") if s.strip()]

    def options(self, key):
        out = {}
        for item in self.list(key):
            k, sep, v = item.partition("=")
            if not sep:
                raise ConfigError(f"{key} entries must look like k=v, got {item!r}")
            out[k.strip()] = v.strip()
        return out

    def items(self):
        return sorted(self._values.items())

    def dumps(self, header=()):
        lines = [f"# {h}" for h in header]
        lines += [f"{k} = {v}" for k, v in self.items()]
        return "\n".join(lines) + "\n"

    def digest(self, keys, extra=""):
        """Short stable hash of the listed keys (plus optional extra text)."""
        h = hashlib.sha256()
        for k in sorted(keys):
            h.update(f"{k}={self[k]}\n".encode())
        h.update(extra.encode())
        return h.hexdigest()[:12]


def parse_config_text(text):
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ConfigError(f"line {lineno}: expected key = value, got {raw!r}")
        key = key.strip()
        if key not in DEFAULTS:
            raise ConfigError(f"line {lineno}: unknown config key {key!r}")
        values[key] = val.strip()
    return values


def describe():
    width = max(len(k) for k in DEFAULTS)
    return "\n".join(f"{k.ljust(width)}  {d!r:>14}  {desc}" for k, (d, desc) in DEFAULTS.items())
