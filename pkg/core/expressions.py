"""
Expressions - Évaluateur d'expressions arithmétiques des fichiers de configuration
Grammaire: + - * / ^, parenthèses, nombres, sin, cos, exp, sqrt, pi; variables x, y
"""
import logging
from typing import Dict, Tuple

import numpy as np
import sympy as sp
from sympy.core.function import AppliedUndef
from sympy.parsing.sympy_parser import (
    convert_xor,
    parse_expr,
    standard_transformations,
)

from core.errors import ExpressionError

logger = logging.getLogger(__name__)

X, Y = sp.symbols('x y', real=True)

ALLOWED_NAMES: Dict[str, object] = {
    'sin': sp.sin,
    'cos': sp.cos,
    'exp': sp.exp,
    'sqrt': sp.sqrt,
    'pi': sp.pi,
    'x': X,
    'y': Y,
    'x1': X,
    'x2': Y,
    'y1': X,
    'y2': Y,
}

_TRANSFORMATIONS = standard_transformations + (convert_xor,)


def _parse(text: str) -> sp.Expr:
    if not isinstance(text, str) or not text.strip():
        raise ExpressionError(f"Empty expression: {text!r}")

    global_dict = {
        'Integer': sp.Integer,
        'Float': sp.Float,
        'Rational': sp.Rational,
        'Symbol': sp.Symbol,
        'Function': sp.Function,
        '__builtins__': {},
    }
    try:
        expr = parse_expr(text, local_dict=dict(ALLOWED_NAMES),
                          global_dict=global_dict,
                          transformations=_TRANSFORMATIONS)
    except Exception as e:
        raise ExpressionError(f"Cannot parse expression {text!r}: {e}") from e

    if not isinstance(expr, sp.Expr):
        raise ExpressionError(f"Expression {text!r} is not arithmetic")

    unknown_functions = expr.atoms(AppliedUndef)
    if unknown_functions:
        names = sorted(str(f.func) for f in unknown_functions)
        raise ExpressionError(f"Unknown functions in {text!r}: {', '.join(names)}")

    unknown_symbols = expr.free_symbols - {X, Y}
    if unknown_symbols:
        names = sorted(str(s) for s in unknown_symbols)
        raise ExpressionError(f"Unknown variables in {text!r}: {', '.join(names)}")

    return expr


class Expression:
    """Expression scalaire f(x, y) avec dérivées exactes"""

    def __init__(self, text: str = None, expr: sp.Expr = None):
        if expr is None:
            expr = _parse(text)
        self.expr = sp.sympify(expr)
        self.text = text if text is not None else str(self.expr)
        self._function = sp.lambdify((X, Y), self.expr, modules='numpy')

    @classmethod
    def constant(cls, value: float) -> 'Expression':
        return cls(expr=sp.Float(value))

    @property
    def is_constant(self) -> bool:
        return not self.expr.free_symbols

    def __call__(self, x, y=None) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        y = np.zeros_like(x) if y is None else np.asarray(y, dtype=float)
        shape = np.broadcast(x, y).shape
        values = np.asarray(self._function(x, y), dtype=float)
        return np.broadcast_to(values, shape).copy() if values.shape != shape else values

    def derivative(self, nx: int = 0, ny: int = 0) -> 'Expression':
        """Dérivée exacte d^(nx+ny) / dx^nx dy^ny"""
        expr = self.expr
        if nx:
            expr = sp.diff(expr, X, nx)
        if ny:
            expr = sp.diff(expr, Y, ny)
        return Expression(expr=expr)

    def gradient(self) -> Tuple['Expression', 'Expression']:
        return self.derivative(1, 0), self.derivative(0, 1)

    def __repr__(self):
        return f"Expression({self.text!r})"


def combine(func, *expressions: Expression) -> Expression:
    """Construit une nouvelle expression à partir d'expressions existantes"""
    return Expression(expr=func(*[e.expr for e in expressions]))
