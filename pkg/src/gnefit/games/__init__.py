from .base import (ParametricGame, cost_grad, eval_constraints, eval_cost, pseudo_gradient,
                   violation)
from .builtin import (BUILTINS, LQGame, NonconvexTanhGame, QCQPGame, SwitchingGame,
                      build_builtin, lq17, nonmono18, nonmono18_solution, qcqp19,
                      random_lq_gnep, random_mpqcqp, random_mpqp)
from .expr import CustomGame, Expression, ExpressionError
from .io import dumps_game, load_game, loads_game, save_game

__all__ = [
    "BUILTINS", "CustomGame", "Expression", "ExpressionError", "LQGame", "NonconvexTanhGame",
    "ParametricGame", "QCQPGame", "SwitchingGame", "build_builtin", "cost_grad", "dumps_game",
    "eval_constraints", "eval_cost", "load_game", "loads_game", "lq17", "nonmono18",
    "nonmono18_solution", "pseudo_gradient", "qcqp19", "random_lq_gnep", "random_mpqcqp",
    "random_mpqp", "save_game", "violation",
]
