"""Closed-form field descriptors.

Scenario files describe lapse, metric and potential as short arithmetic
strings in the coordinates ``x``, ``y`` and the time ``t``.  The grammar is
deliberately small: numbers, ``+ - * / ^``, parentheses, the functions
``exp, log, sqrt, cosh, sinh, tanh, sin, cos, abs`` and the power-law
singularity marker ``sing(x0, p)`` (``sing(x0, y0, p)`` in two dimensions),
which stands for ``|x - x0|**(-p)`` and is remembered so that local
integrability can be classified analytically.

Expressions are parsed through :mod:`ast` and rebuilt as :mod:`sympy`
objects, so nothing is ever passed to ``eval``.
"""

from __future__ import annotations

import ast
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import sympy as sp

__all__ = ["X", "Y", "T", "Singularity", "Expr", "ExpressionError", "parse"]

X, Y, T = sp.symbols("x y t", real=True)
_COORDS = (X, Y)

_FUNCTIONS = {
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "cosh": sp.cosh,
    "sinh": sp.sinh,
    "tanh": sp.tanh,
    "sin": sp.sin,
    "cos": sp.cos,
    "abs": sp.Abs,
}
_CONSTANTS = {"pi": sp.pi, "e": sp.E}


class ExpressionError(ValueError):
    """Raised for malformed or disallowed descriptor strings."""


@dataclass(frozen=True)
class Singularity:
    """A marked power-law singularity ``|r - r0|**(-power)``."""

    location: tuple[float, ...]
    power: float


class Expr:
    """A scalar closed form in ``(x[, y], t)`` backed by sympy.

    Evaluation is vectorised through a cached ``lambdify``.  Arithmetic with
    other ``Expr`` objects or numbers returns new ``Expr`` objects and keeps
    singularity markers.
    """

    def __init__(self, sym, source: str | None = None,
                 singularities: Sequence[Singularity] = ()):
        self.sym = sp.sympify(sym)
        self.source = source if source is not None else str(self.sym)
        self.singularities = tuple(singularities)
        self._fn = None

    # construction -----------------------------------------------------
    @classmethod
    def constant(cls, value: float) -> "Expr":
        return cls(sp.Float(value) if not float(value).is_integer()
                   else sp.Integer(int(value)), source=repr(float(value)))

    @classmethod
    def coerce(cls, value) -> "Expr":
        if isinstance(value, Expr):
            return value
        if isinstance(value, str):
            return parse(value)
        return cls.constant(float(value))

    # arithmetic -------------------------------------------------------
    def _combine(self, other, op, fmt):
        other = Expr.coerce(other)
        return Expr(op(self.sym, other.sym), fmt.format(self.source, other.source),
                    self.singularities + other.singularities)

    def __add__(self, other):
        return self._combine(other, lambda a, b: a + b, "({}) + ({})")

    def __radd__(self, other):
        return Expr.coerce(other) + self

    def __sub__(self, other):
        return self._combine(other, lambda a, b: a - b, "({}) - ({})")

    def __rsub__(self, other):
        return Expr.coerce(other) - self

    def __mul__(self, other):
        return self._combine(other, lambda a, b: a * b, "({}) * ({})")

    def __rmul__(self, other):
        return Expr.coerce(other) * self

    def __truediv__(self, other):
        return self._combine(other, lambda a, b: a / b, "({}) / ({})")

    def __rtruediv__(self, other):
        return Expr.coerce(other) / self

    def __pow__(self, power):
        return self._combine(power, lambda a, b: a ** b, "({})^({})")

    def __neg__(self):
        return Expr(-self.sym, f"-({self.source})", self.singularities)

    def __repr__(self):
        return f"Expr({self.source!r})"

    def __eq__(self, other):
        return isinstance(other, Expr) and sp.simplify(self.sym - other.sym) == 0

    def __hash__(self):
        return hash(self.sym)

    # calculus ---------------------------------------------------------
    def diff(self, var) -> "Expr":
        return Expr(sp.diff(self.sym, var), singularities=self.singularities)

    def depends_on(self, var) -> bool:
        return var in self.sym.free_symbols

    @property
    def is_time_dependent(self) -> bool:
        return self.depends_on(T)

    def substitute_time(self, t: float) -> "Expr":
        return Expr(self.sym.subs(T, t), singularities=self.singularities)

    # evaluation -------------------------------------------------------
    def __call__(self, *coords, t: float = 0.0) -> np.ndarray:
        if self._fn is None:
            self._fn = sp.lambdify((X, Y, T), self.sym, modules="numpy")
        coords = [np.asarray(c, dtype=float) for c in coords]
        while len(coords) < 2:
            coords.append(np.zeros_like(coords[0]) if coords else np.zeros(()))
        shape = np.broadcast_shapes(*(c.shape for c in coords))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            out = self._fn(coords[0], coords[1], float(t))
        return np.broadcast_to(np.asarray(out, dtype=float), shape).copy()

    def to_dict(self) -> dict:
        return {"expr": self.source,
                "singularities": [{"location": list(s.location), "power": s.power}
                                  for s in self.singularities]}


def parse(text: str, dimension: int = 2, name: str = "expression") -> Expr:
    """Parse a descriptor string into an :class:`Expr`.

    ``name`` is used in error messages so a malformed scenario file points at
    the offending field.
    """
    if not isinstance(text, str):
        return Expr.coerce(text)
    src = text.strip()
    if not src:
        raise ExpressionError(f"{name}: empty expression")
    try:
        tree = ast.parse(src.replace("^", "**"), mode="eval")
    except SyntaxError as exc:
        raise ExpressionError(f"{name}: cannot parse {text!r} ({exc.msg})") from None
    markers: list[Singularity] = []
    allowed = {"x": X, "y": Y, "t": T} if dimension >= 2 else {"x": X, "t": T}
    sym = _build(tree.body, allowed, markers, dimension, name, text)
    return Expr(sym, source=src, singularities=markers)


def _number(node, name, text):
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return float(node.value)
    if (isinstance(node, ast.UnaryOp) and isinstance(node.op, ast.USub)
            and isinstance(node.operand, ast.Constant)):
        return -float(node.operand.value)
    raise ExpressionError(f"{name}: sing() arguments must be numeric literals in {text!r}")


def _build(node, allowed, markers, dim, name, text):
    rec = lambda n: _build(n, allowed, markers, dim, name, text)  # noqa: E731
    if isinstance(node, ast.Constant):
        if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
            raise ExpressionError(f"{name}: unsupported literal {node.value!r} in {text!r}")
        return sp.Integer(node.value) if isinstance(node.value, int) else sp.Float(node.value)
    if isinstance(node, ast.Name):
        if node.id in allowed:
            return allowed[node.id]
        if node.id in _CONSTANTS:
            return _CONSTANTS[node.id]
        raise ExpressionError(f"{name}: unknown symbol {node.id!r} in {text!r}")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        val = rec(node.operand)
        return -val if isinstance(node.op, ast.USub) else val
    if isinstance(node, ast.BinOp):
        a, b = rec(node.left), rec(node.right)
        ops = {ast.Add: lambda: a + b, ast.Sub: lambda: a - b, ast.Mult: lambda: a * b,
               ast.Div: lambda: a / b, ast.Pow: lambda: a ** b}
        for kind, fn in ops.items():
            if isinstance(node.op, kind):
                return fn()
        raise ExpressionError(f"{name}: unsupported operator in {text!r}")
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        fname = node.func.id
        if fname == "sing":
            args = [_number(a, name, text) for a in node.args]
            if len(args) != dim + 1:
                raise ExpressionError(
                    f"{name}: sing() takes {dim + 1} numeric arguments in {dim}D, got {len(args)}")
            loc, power = tuple(args[:-1]), args[-1]
            markers.append(Singularity(loc, power))
            if dim == 1:
                return sp.Abs(X - loc[0]) ** (-sp.Float(power))
            r2 = sum((c - l) ** 2 for c, l in zip(_COORDS[:dim], loc))
            return r2 ** (-sp.Float(power) / 2)
        if fname in _FUNCTIONS:
            if len(node.args) != 1:
                raise ExpressionError(f"{name}: {fname}() takes one argument in {text!r}")
            return _FUNCTIONS[fname](rec(node.args[0]))
        raise ExpressionError(f"{name}: unknown function {fname!r} in {text!r}")
    raise ExpressionError(f"{name}: unsupported syntax in {text!r}")
