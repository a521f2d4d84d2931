"""Versioned text format for games.

    MPFIT-GAME v1
    tag lq
    name lq17
    agent_dims 1,1
    n_p 2
    array p_lb 2 -1 -1
    ...
    option N 2
    expr cost0 0.5*x[0]**2 + p[0]*x[0]

Arrays use 17 significant digits so save/load/save is bit-exact.
"""

from __future__ import annotations

import numpy as np

from ..nn import format_array_line, parse_array_line
from .builtin import LQGame, NonconvexTanhGame, QCQPGame, SwitchingGame
from .expr import CustomGame

GAME_MAGIC = "MPFIT-GAME v1"


def dumps_game(game):
    opts, arrays, exprs = game.record()
    lines = [GAME_MAGIC, f"tag {game.tag}", f"class {type(game).__name__}", f"name {game.name}",
             "agent_dims " + ",".join(str(n) for n in game.agent_dims), f"n_p {game.n_p}"]
    for key in ("p_lb", "p_ub", "x_lb", "x_ub"):
        lines.append("array " + format_array_line(key, getattr(game, key)))
    for key, val in opts.items():
        lines.append(f"option {key} {val!r}")
    for key, arr in arrays.items():
        lines.append("array " + format_array_line(key, arr))
    for key, src in exprs.items():
        lines.append(f"expr {key} {src}")
    return "\n".join(lines) + "\n"


def loads_game(text):
    lines = text.splitlines()
    if not lines or lines[0].strip() != GAME_MAGIC:
        raise ValueError("not a game file (bad header)")
    head, arrays, opts, exprs = {}, {}, {}, {}
    for ln in lines[1:]:
        if not ln.strip():
            continue
        kind, _, rest = ln.partition(" ")
        if kind == "array":
            name, arr = parse_array_line(rest)
            arrays[name] = arr
        elif kind == "option":
            key, _, val = rest.partition(" ")
            opts[key] = float(val) if any(ch in val for ch in ".e") else int(val)
        elif kind == "expr":
            key, _, src = rest.partition(" ")
            exprs[key] = src
        else:
            head[kind] = rest
    cls = head.get("class")
    dims = [int(n) for n in head["agent_dims"].split(",")]
    n_p = int(head["n_p"])
    boxes = [arrays.pop(k) for k in ("p_lb", "p_ub", "x_lb", "x_ub")]
    name, tag = head.get("name"), head.get("tag")
    if cls == "LQGame":
        return LQGame(dims, arrays["Q"], arrays["c"], arrays["F"], arrays["A"], arrays["b"],
                      arrays["S"], *boxes, name=name, tag=tag)
    if cls == "QCQPGame":
        return QCQPGame(dims, arrays["Q"], arrays["c"], arrays["F"], arrays["A"], arrays["b"],
                        arrays["S"], arrays["Qc"], arrays["xc"], arrays["bc"], arrays["sc"],
                        *boxes, name=name, tag=tag)
    if cls == "SwitchingGame":
        return SwitchingGame(int(opts["N"]), float(opts["ell"]), float(opts["p_max"]), name=name)
    if cls == "NonconvexTanhGame":
        return NonconvexTanhGame(int(opts["N"]), name=name)
    if cls == "CustomGame":
        costs = [exprs[f"cost{i}"] for i in range(len(dims))]
        ineqs = [exprs[k] for k in sorted((k for k in exprs if k.startswith("ineq")),
                                          key=lambda k: int(k[4:]))]
        eqs = [exprs[k] for k in sorted((k for k in exprs if k.startswith("eq")),
                                        key=lambda k: int(k[2:]))]
        return CustomGame(dims, n_p, costs, *boxes, ineqs=ineqs, eqs=eqs, name=name)
    raise ValueError(f"unknown game class {cls!r}")


def save_game(game, path):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_game(game))


def load_game(path):
    with open(path, encoding="utf-8") as fh:
        return loads_game(fh.read())
