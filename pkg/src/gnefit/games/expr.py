"""Custom games given as arithmetic expressions over ``x`` and ``p``.

Expressions are parsed with :mod:`ast` and evaluated by walking a whitelist
of node types, so no user code is ever executed.  Supported syntax::

    x[0], p[1]          scalar components
    x[0:2], x           vector slices / the whole vector
    + - * / **k         (k a numeric constant)
    tanh exp log sqrt   elementwise functions
    dot(a, b), sum(a)   reductions over vector slices
"""

from __future__ import annotations

import ast

import numpy as np

from .. import autodiff as ad
from .base import ParametricGame

_FUNCS = {
    "tanh": ad.tanh,
    "exp": ad.exp,
    "log": ad.log,
    "sqrt": ad.sqrt,
}


class ExpressionError(ValueError):
    pass


class Expression:
    def __init__(self, source):
        self.source = source.strip()
        try:
            self.tree = ast.parse(self.source, mode="eval").body
        except SyntaxError as exc:
            raise ExpressionError(f"cannot parse {source!r}: {exc.msg}") from None
        self._validate(self.tree)

    def _validate(self, node):
        ok = (ast.BinOp, ast.UnaryOp, ast.Call, ast.Name, ast.Subscript, ast.Constant,
              ast.Slice, ast.Add, ast.Sub, ast.Mult, ast.Div, ast.Pow, ast.USub, ast.UAdd,
              ast.Load)
        for sub in ast.walk(node):
            if not isinstance(sub, ok):
                raise ExpressionError(f"unsupported syntax {type(sub).__name__} in {self.source!r}")
            if isinstance(sub, ast.Name) and sub.id not in ("x", "p") and sub.id not in _FUNCS \
                    and sub.id not in ("dot", "sum"):
                raise ExpressionError(f"unknown name {sub.id!r} in {self.source!r}")
            if isinstance(sub, ast.Constant) and not isinstance(sub.value, (int, float)):
                raise ExpressionError(f"non-numeric constant in {self.source!r}")

    def __call__(self, X, P):
        out = self._eval(self.tree, X, P)
        K = ad.value(X).shape[0]
        if np.ndim(ad.value(out)) == 0:
            out = ad.add(np.zeros(K), out)
        return out

    def _eval(self, node, X, P):
        ev = lambda n: self._eval(n, X, P)
        if isinstance(node, ast.Constant):
            return float(node.value)
        if isinstance(node, ast.Name):
            if node.id == "x":
                return X
            if node.id == "p":
                return P
            raise ExpressionError(f"{node.id!r} used as a value")
        if isinstance(node, ast.Subscript):
            base = ev(node.value)
            if base is not X and base is not P:
                raise ExpressionError("only x and p can be indexed")
            sl = node.slice
            if isinstance(sl, ast.Slice):
                lo = 0 if sl.lower is None else int(_const(sl.lower))
                hi = ad.value(base).shape[1] if sl.upper is None else int(_const(sl.upper))
                return base[:, lo:hi]
            return base[:, int(_const(sl))]
        if isinstance(node, ast.UnaryOp):
            v = ev(node.operand)
            return ad.neg(v) if isinstance(node.op, ast.USub) else v
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                return ad.power(ev(node.left), _const(node.right))
            a, b = ev(node.left), ev(node.right)
            op = {ast.Add: ad.add, ast.Sub: ad.sub, ast.Mult: ad.mul, ast.Div: ad.div}[type(node.op)]
            return op(a, b)
        if isinstance(node, ast.Call):
            name = node.func.id if isinstance(node.func, ast.Name) else None
            args = [ev(a) for a in node.args]
            if name in _FUNCS and len(args) == 1:
                return _FUNCS[name](args[0])
            if name == "dot" and len(args) == 2:
                return ad.sum_(ad.mul(args[0], args[1]), axis=-1)
            if name == "sum" and len(args) == 1:
                return ad.sum_(args[0], axis=-1)
            raise ExpressionError(f"bad call {ast.unparse(node)!r}")
        raise ExpressionError(f"unsupported node {type(node).__name__}")


def _const(node):
    if isinstance(node, ast.Constant):
        return node.value
    if isinstance(node, ast.UnaryOp) and isinstance(node.operand, ast.Constant):
        return -node.operand.value if isinstance(node.op, ast.USub) else node.operand.value
    raise ExpressionError("expected a numeric constant")


class CustomGame(ParametricGame):
    tag = "custom"

    def __init__(self, agent_dims, n_p, costs, p_lb, p_ub, x_lb, x_ub,
                 ineqs=(), eqs=(), name=None):
        super().__init__(agent_dims, n_p, p_lb, p_ub, x_lb, x_ub, name or "custom")
        if len(costs) != self.N:
            raise ValueError(f"need {self.N} cost expressions, got {len(costs)}")
        self.cost_exprs = [Expression(c) for c in costs]
        self.ineq_exprs = [Expression(g) for g in ineqs]
        self.eq_exprs = [Expression(h) for h in eqs]

    @property
    def n_g(self):
        return len(self.ineq_exprs)

    @property
    def n_h(self):
        return len(self.eq_exprs)

    def cost(self, i, X, P):
        return self.cost_exprs[i](X, P)

    def _rows(self, exprs, X, P):
        if not exprs:
            return np.zeros((ad.value(X).shape[0], 0))
        return ad.stack([e(X, P) for e in exprs], axis=1)

    def ineq(self, X, P):
        return self._rows(self.ineq_exprs, X, P)

    def eq(self, X, P):
        return self._rows(self.eq_exprs, X, P)

    def record(self):
        exprs = {f"cost{i}": e.source for i, e in enumerate(self.cost_exprs)}
        exprs.update({f"ineq{j}": e.source for j, e in enumerate(self.ineq_exprs)})
        exprs.update({f"eq{j}": e.source for j, e in enumerate(self.eq_exprs)})
        return {}, {}, exprs
