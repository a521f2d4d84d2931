"""gnefit command line: gnefit <command> [--config FILE] [--key value ...]"""

from __future__ import annotations

import os
import sys

from .config import DEFAULTS, RunConfig, describe, parse_config_text
from .errors import ConfigError, GnefitError, InputFileError
from .evaluate import report_table
from .pipeline import BENCHES, Run, bench

COMMANDS = {
    "gen-game": "write the configured game to game/",
    "gen-data": "write train/val/test dataset CSVs to data/",
    "train-value": "fit one value model per agent",
    "train-gne": "fit the equilibrium solution model (trains value models if needed)",
    "train-mp": "fit a single-agent solution model",
    "eval": "evaluate the solution model on the test set",
    "predict": "map parameter rows in predict_input to decisions",
    "bench": f"run a named experiment: {', '.join(BENCHES)} (options as k=v)",
    "keys": "list every config key with its default",
}

USAGE = ("usage: gnefit <command> [--config FILE] [--key value ...]\n\ncommands:\n"
         + "\n".join(f"  {c:<12} {d}" for c, d in COMMANDS.items())
         + "\n\nbench examples: gnefit bench nonmono18 | gnefit bench switching N=2\n")


def parse_args(argv):
    """(command, RunConfig, positional args). Config file first, then --key overrides."""
    if not argv or argv[0] in ("-h", "--help", "help"):
        return None, None, []
    command, rest = argv[0], list(argv[1:])
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; choose from {', '.join(COMMANDS)}")
    overrides, positional, config_file = {}, [], None
    k = 0
    while k < len(rest):
        tok = rest[k]
        if tok.startswith("--"):
            key, sep, val = tok[2:].partition("=")
            key = key.replace("-", "_")
            if not sep:
                if k + 1 >= len(rest):
                    raise ConfigError(f"option --{key} needs a value")
                val = rest[k + 1]
                k += 1
            if key == "config":
                config_file = val
            elif key not in DEFAULTS:
                raise ConfigError(f"unknown config key {key!r}")
            else:
                overrides[key] = val
        else:
            positional.append(tok)
        k += 1
    cfg = RunConfig()
    if config_file is not None:
        if not os.path.isfile(config_file):
            raise InputFileError(f"config file not found: {config_file}")
        with open(config_file, encoding="utf-8") as fh:
            cfg.update(parse_config_text(fh.read()))
    cfg.update(overrides)
    return command, cfg, positional


def _bench_args(positional):
    if not positional:
        raise ConfigError(f"bench needs an experiment name: {', '.join(BENCHES)}")
    opts = {}
    for item in positional[1:]:
        key, sep, val = item.partition("=")
        if not sep:
            raise ConfigError(f"bench options must look like k=v, got {item!r}")
        opts[key] = val
    return positional[0], opts


def run(command, cfg, positional=(), out=None):
    out = out or sys.stdout
    if command != "bench" and positional:
        raise ConfigError(f"unexpected argument(s): {' '.join(positional)}")
    if command == "keys":
        out.write(describe() + "\n")
        return 0
    if command == "bench":
        name, opts = _bench_args(positional)
        reports, path = bench(cfg, name, opts)
        out.write(report_table(reports, f"bench {name}"))
        out.write(f"report: {path}\n")
        return 0
    r = Run(cfg, command)
    if command == "gen-game":
        r.game_stage()
    elif command == "gen-data":
        r.data_stage()
    elif command == "train-value":
        r.train_value_stage()
    elif command == "train-gne":
        r.train_gne_stage()
    elif command == "train-mp":
        r.train_mp_stage()
    elif command == "eval":
        out.write(report_table(r.eval_command(), f"{r.game().name} (test set)"))
    elif command == "predict":
        r.predict_command()
    for p in r.written:
        out.write(f"wrote {p}\n")
    return 0


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        command, cfg, positional = parse_args(argv)
        if command is None:
            sys.stdout.write(USAGE)
            return 0
        return run(command, cfg, positional)
    except GnefitError as exc:
        sys.stderr.write(f"gnefit: {exc.category}: {exc}\n")
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
