"""Arithmetic expressions in ``(t, x, u, v)`` compiled to vectorized callables.

Only numbers, the four variables, ``pi`` and ``e``, the operators
``+ - * / **`` and a fixed list of numpy functions are accepted; anything
else (attributes, subscripts, comprehensions, unknown names) is rejected
before evaluation.
"""

from __future__ import annotations

import ast
import operator
from typing import Callable

import numpy as np

__all__ = ["ExpressionError", "compile_expression", "VARIABLES", "FUNCTIONS"]

VARIABLES = ("t", "x", "u", "v")

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "tanh": np.tanh,
    "arctan": np.arctan,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "abs": np.abs,
    "minimum": np.minimum,
    "maximum": np.maximum,
}

CONSTANTS = {"pi": np.pi, "e": np.e}

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_UNARY = {ast.UAdd: operator.pos, ast.USub: operator.neg}


class ExpressionError(ValueError):
    """Malformed or disallowed expression."""


def _build(node) -> Callable:
    if isinstance(node, ast.Expression):
        return _build(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) and not isinstance(
        node.value, bool
    ):
        value = float(node.value)
        return lambda env: value
    if isinstance(node, ast.Name):
        name = node.id
        if name in VARIABLES:
            return lambda env: env[name]
        if name in CONSTANTS:
            value = CONSTANTS[name]
            return lambda env: value
        raise ExpressionError(f"unknown name {name!r}")
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        op = _BINOPS[type(node.op)]
        left, right = _build(node.left), _build(node.right)
        return lambda env: op(left(env), right(env))
    if isinstance(node, ast.UnaryOp) and type(node.op) in _UNARY:
        op = _UNARY[type(node.op)]
        inner = _build(node.operand)
        return lambda env: op(inner(env))
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.func.id not in FUNCTIONS:
            raise ExpressionError(f"function not allowed: {ast.unparse(node.func)}")
        if node.keywords:
            raise ExpressionError("keyword arguments are not allowed")
        fn = FUNCTIONS[node.func.id]
        args = [_build(a) for a in node.args]
        return lambda env: fn(*(a(env) for a in args))
    raise ExpressionError(f"unsupported syntax: {ast.unparse(node)}")


def compile_expression(text: str) -> Callable:
    """Compile ``text`` into ``f(t, x, u, v)`` operating elementwise on arrays.

    >>> f = compile_expression("sin(u) + 0.5*v")
    >>> float(f(0.0, 1.0, 0.0, 2.0))
    1.0
    """
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError("empty expression")
    try:
        tree = ast.parse(text.strip(), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"cannot parse {text!r}: {exc.msg}") from None
    body = _build(tree)

    def f(t, x, u, v):
        t, x, u, v = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, x, u, v)))
        with np.errstate(all="ignore"):
            out = body({"t": t, "x": x, "u": u, "v": v})
        return np.broadcast_to(np.asarray(out, dtype=float), u.shape)

    f.expression = text.strip()
    return f
