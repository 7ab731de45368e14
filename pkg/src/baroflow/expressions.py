"""Small arithmetic-expression evaluator for scenario fields.

Expression strings use the variables ``t``, ``x1``, ``x2``, the constant
``pi`` and a whitelist of functions (sin, cos, tan, exp, log, sqrt, tanh,
abs, min, max).  Strings are parsed with the :mod:`ast` module and converted
to sympy expressions, which gives us exact symbolic derivatives for boundary
data and manufactured solutions and fast vectorized evaluation via lambdify.
"""

import ast

import numpy as np
import sympy as sp

from .errors import ConfigurationError

T, X1, X2 = sp.symbols("t x1 x2", real=True)

_FUNCTIONS = {
    "sin": sp.sin,
    "cos": sp.cos,
    "tan": sp.tan,
    "exp": sp.exp,
    "log": sp.log,
    "sqrt": sp.sqrt,
    "tanh": sp.tanh,
    "abs": sp.Abs,
    "min": sp.Min,
    "max": sp.Max,
}

_NAMES = {"t": T, "x1": X1, "x2": X2, "pi": sp.pi, "e": sp.E}

_BINOPS = {
    ast.Add: lambda a, b: a + b,
    ast.Sub: lambda a, b: a - b,
    ast.Mult: lambda a, b: a * b,
    ast.Div: lambda a, b: a / b,
    ast.Pow: lambda a, b: a**b,
}


def parse_expression(text):
    """Parse an expression string into a sympy expression.

    Only arithmetic, the whitelisted names and the whitelisted functions are
    accepted; anything else raises :class:`ConfigurationError`.
    """
    if isinstance(text, sp.Expr):
        return text
    if isinstance(text, (int, float)):
        return sp.Float(float(text))
    try:
        tree = ast.parse(str(text), mode="eval")
    except SyntaxError as exc:
        raise ConfigurationError(f"cannot parse expression {text!r}: {exc}") from exc
    return _convert(tree.body, text)


def _convert(node, source):
    if isinstance(node, ast.Constant):
        if isinstance(node.value, (int, float)):
            return sp.Number(node.value)
        raise ConfigurationError(f"non-numeric constant in {source!r}")
    if isinstance(node, ast.Name):
        try:
            return _NAMES[node.id]
        except KeyError:
            raise ConfigurationError(
                f"unknown name {node.id!r} in {source!r}; allowed: {sorted(_NAMES)}"
            ) from None
    if isinstance(node, ast.BinOp):
        op = _BINOPS.get(type(node.op))
        if op is None:
            raise ConfigurationError(f"operator not allowed in {source!r}")
        return op(_convert(node.left, source), _convert(node.right, source))
    if isinstance(node, ast.UnaryOp):
        if isinstance(node.op, ast.USub):
            return -_convert(node.operand, source)
        if isinstance(node.op, ast.UAdd):
            return _convert(node.operand, source)
        raise ConfigurationError(f"unary operator not allowed in {source!r}")
    if isinstance(node, ast.Call):
        if not isinstance(node.func, ast.Name) or node.keywords:
            raise ConfigurationError(f"call not allowed in {source!r}")
        try:
            fn = _FUNCTIONS[node.func.id]
        except KeyError:
            raise ConfigurationError(
                f"unknown function {node.func.id!r} in {source!r}; "
                f"allowed: {sorted(_FUNCTIONS)}"
            ) from None
        return fn(*[_convert(a, source) for a in node.args])
    raise ConfigurationError(f"unsupported syntax in expression {source!r}")


class ScalarField:
    """A scalar field of (t, x1, x2) with symbolic derivatives."""

    def __init__(self, expr):
        self.expr = parse_expression(expr) if not isinstance(expr, sp.Expr) else expr
        self._fn = sp.lambdify((T, X1, X2), self.expr, modules="numpy")
        self._derivatives = {}

    def __call__(self, t, x1, x2):
        out = self._fn(t, x1, x2)
        arr = np.asarray(out, dtype=float)
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        if arr.shape != shape:
            arr = np.broadcast_to(arr, shape).copy()
        return arr

    def diff(self, var):
        if var not in self._derivatives:
            self._derivatives[var] = ScalarField(sp.diff(self.expr, var))
        return self._derivatives[var]

    def dt(self):
        return self.diff(T)

    def dx(self, axis):
        return self.diff((X1, X2)[axis])

    @property
    def time_dependent(self):
        return T in self.expr.free_symbols

    def __repr__(self):
        return f"ScalarField({self.expr})"


class VectorField:
    """A 2-component vector field of (t, x1, x2)."""

    def __init__(self, exprs):
        if len(exprs) != 2:
            raise ConfigurationError("vector fields need exactly 2 components")
        self.components = [
            e if isinstance(e, ScalarField) else ScalarField(e) for e in exprs
        ]

    def __call__(self, t, x1, x2):
        """Evaluate to an array of shape broadcast(x1, x2) + (2,)."""
        comps = [c(t, x1, x2) for c in self.components]
        return np.stack(comps, axis=-1)

    def gradient(self, t, x1, x2):
        """grad[..., a, b] = d u_a / d x_b, evaluated symbolically."""
        shape = np.broadcast(np.asarray(x1), np.asarray(x2)).shape
        out = np.empty(shape + (2, 2))
        for a in range(2):
            for b in range(2):
                out[..., a, b] = self.components[a].dx(b)(t, x1, x2)
        return out

    def divergence(self, t, x1, x2):
        return self.components[0].dx(0)(t, x1, x2) + self.components[1].dx(1)(t, x1, x2)

    def dt(self, t, x1, x2):
        return np.stack([c.dt()(t, x1, x2) for c in self.components], axis=-1)

    def half_square_gradient(self):
        """Symbolic gradient of |u|^2 / 2, returned as a VectorField."""
        half = (self.components[0].expr ** 2 + self.components[1].expr ** 2) / 2
        return VectorField([sp.diff(half, X1), sp.diff(half, X2)])

    @property
    def time_dependent(self):
        return any(c.time_dependent for c in self.components)

    @property
    def exprs(self):
        return [c.expr for c in self.components]


def constant_vector(values):
    return VectorField([sp.Number(values[0]), sp.Number(values[1])])
