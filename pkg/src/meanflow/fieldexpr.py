"""Small arithmetic expression language for defining fields on a mesh.

Grammar (lowest to highest precedence)::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | power
    power   := primary ('^' expo)?          # right associative
    expo    := '-' expo | power
    primary := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x, y`` on the torus and ``theta, phi`` on the sphere.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

from .errors import ExprEvalError, ExprSyntaxError, NonPositiveError
from .mesh import MeshGeometry

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "abs": np.abs,
}
VARIABLES = ("x", "y", "theta", "phi")
CONSTANTS = {"pi": np.pi}

_BINARY = {"+": np.add, "-": np.subtract, "*": np.multiply, "/": np.divide}
_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


# ---------------------------------------------------------------------------
# tree


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Name:
    """A variable or a named constant."""

    name: str


@dataclass(frozen=True)
class Neg:
    operand: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


@dataclass(frozen=True)
class FieldExpr:
    """A parsed expression together with its source text."""

    root: object
    text: str = ""

    @property
    def variables(self):
        return frozenset(_collect_vars(self.root))

    def __str__(self):
        return to_string(self.root)

    def evaluate(self, **env):
        """Evaluate with variables bound to scalars or arrays."""
        arrays = {k: np.asarray(v, dtype=float) for k, v in env.items()}
        missing = self.variables - arrays.keys()
        if missing:
            raise ExprEvalError(f"unbound variable(s): {', '.join(sorted(missing))}")
        shape = np.broadcast_shapes(*(a.shape for a in arrays.values())) if arrays else ()
        with np.errstate(all="ignore"):
            out = _eval(self.root, arrays)
        out = np.broadcast_to(np.asarray(out, dtype=float), shape)
        return float(out) if out.ndim == 0 else np.array(out)


def _collect_vars(node):
    if isinstance(node, Name):
        if node.name in VARIABLES:
            yield node.name
    elif isinstance(node, Neg):
        yield from _collect_vars(node.operand)
    elif isinstance(node, BinOp):
        yield from _collect_vars(node.left)
        yield from _collect_vars(node.right)
    elif isinstance(node, Call):
        yield from _collect_vars(node.arg)


def _bad_index(mask):
    mask = np.asarray(mask)
    if mask.ndim == 0:
        return None
    return int(np.flatnonzero(mask.ravel())[0])


def _eval(node, env):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Name):
        if node.name in CONSTANTS:
            return CONSTANTS[node.name]
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.operand, env)
    if isinstance(node, Call):
        arg = _eval(node.arg, env)
        if node.func == "log":
            bad = np.asarray(arg) <= 0
            if np.any(bad):
                raise ExprEvalError(f"log of nonpositive value at node {_bad_index(bad)}")
        return FUNCTIONS[node.func](arg)
    left = _eval(node.left, env)
    right = _eval(node.right, env)
    if node.op == "^":
        bad = (np.asarray(left) < 0) & (np.asarray(right) != np.round(right))
        if np.any(bad):
            raise ExprEvalError(
                f"negative base with non-integer exponent at node {_bad_index(bad)}")
        return np.power(left, right)
    return _BINARY[node.op](left, right)


def to_string(node) -> str:
    """Pretty-print with the minimal parentheses needed to reparse identically."""
    text, _ = _fmt(node)
    return text


def _fmt(node):
    if isinstance(node, Num):
        return repr(float(node.value)), 5
    if isinstance(node, Name):
        return node.name, 5
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})", 5
    if isinstance(node, Neg):
        inner, p = _fmt(node.operand)
        if p < _PREC["neg"]:
            inner = f"({inner})"
        return "-" + inner, _PREC["neg"]
    prec = _PREC[node.op]
    left, lp = _fmt(node.left)
    right, rp = _fmt(node.right)
    if node.op == "^":
        # the base must bind tighter than '^'; the exponent may be a power or a negation
        if lp <= prec:
            left = f"({left})"
        if rp < prec and not isinstance(node.right, Neg):
            right = f"({right})"
    else:
        if lp < prec:
            left = f"({left})"
        if rp <= prec:
            right = f"({right})"
    return f"{left}{node.op}{right}", prec


# ---------------------------------------------------------------------------
# parser

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {text[start]!r}", start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def accept(self, value):
        kind, val, _ = self.tok
        if kind == "op" and val == value:
            self.i += 1
            return True
        return False

    def expect(self, value):
        if not self.accept(value):
            raise ExprSyntaxError(f"expected '{value}'", self.tok[2])

    def parse(self):
        node = self.expr()
        kind, val, pos = self.tok
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", pos)
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.primary()
        if self.accept("^"):
            return BinOp("^", base, self.expo())
        return base

    def expo(self):
        if self.accept("-"):
            return Neg(self.expo())
        return self.power()

    def primary(self):
        kind, val, pos = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(val))
        if kind == "name":
            self.i += 1
            if val in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(val, arg)
            if val in VARIABLES or val in CONSTANTS:
                return Name(val)
            raise ExprSyntaxError(f"unknown identifier {val!r}", pos)
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        what = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"expected a number, name or '(' but found {what}", pos)


def parse_expr(text: str) -> FieldExpr:
    if isinstance(text, FieldExpr):
        return text
    return FieldExpr(_Parser(str(text)).parse(), str(text))


def evaluate_constant(text) -> float:
    """Evaluate an expression with no free variables, e.g. ``"4*pi"``."""
    expr = parse_expr(text)
    if expr.variables:
        raise ExprEvalError(f"expression {text!r} is not constant")
    return expr.evaluate()


def materialize(expr, mesh: MeshGeometry) -> np.ndarray:
    """Evaluate ``expr`` pointwise at the mesh nodes."""
    expr = parse_expr(expr)
    illegal = expr.variables - set(mesh.coord_names)
    if illegal:
        raise ExprEvalError(
            f"variable(s) {', '.join(sorted(illegal))} not defined on a {mesh.kind.value} mesh "
            f"(use {', '.join(mesh.coord_names)})")
    coords = mesh.coords()
    try:
        values = expr.evaluate(**{k: coords[k] for k in expr.variables})
    except ExprEvalError as exc:
        raise ExprEvalError(f"{expr.text or expr}: {exc}") from None
    values = np.broadcast_to(np.asarray(values, dtype=float), mesh.shape).copy()
    bad = ~np.isfinite(values)
    if bad.any():
        node = int(np.flatnonzero(bad.ravel())[0])
        raise ExprEvalError(
            f"{expr.text or expr}: non-finite value at node {node} {mesh.grid_index(node)}")
    return values


def validate_positive(field) -> float:
    """Return the minimum of ``field``; raise :class:`NonPositiveError` unless it is > 0."""
    field = np.asarray(field, dtype=float)
    node = int(np.argmin(field))
    minimum = float(field.ravel()[node])
    if not minimum > 0:
        raise NonPositiveError(minimum, node)
    return minimum
