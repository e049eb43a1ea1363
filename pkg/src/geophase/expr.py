"""Scalar expressions over x, y, z with named parameters.

Expressions are small immutable ASTs.  They are evaluated on floats or numpy
arrays (broadcasting), and differentiated with forward-mode value/tangent
propagation, so a gradient costs one pass over the tree.

Grammar::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := "-"? atom ("^" int)?
    atom   := number | ident | func "(" args ")" | "(" expr ")"
    func   := sin | cos | sqrt | abs | sgn | cheb      # cheb(int, expr)

``x``, ``y`` and ``z`` are variables; any other identifier is a parameter.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import (
    DomainError,
    NonDifferentiableError,
    ParseError,
    UnboundParameterError,
    UnknownFunctionError,
)

VARIABLES = ("x", "y", "z")
UNARY_FUNCS = ("sin", "cos", "sqrt", "abs", "sgn")
FUNCS = UNARY_FUNCS + ("cheb",)

CHEB_DOMAIN_TOL = 1e-12


# --------------------------------------------------------------------------
# AST
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Param:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str  # "neg" or one of UNARY_FUNCS
    arg: "Expression"


@dataclass(frozen=True)
class Binary:
    op: str  # + - * /
    left: "Expression"
    right: "Expression"


@dataclass(frozen=True)
class Pow:
    base: "Expression"
    exponent: int


@dataclass(frozen=True)
class Cheb:
    order: int
    arg: "Expression"


Expression = Union[Const, Var, Param, Unary, Binary, Pow, Cheb]


def Add(a, b):
    return Binary("+", a, b)


def Sub(a, b):
    return Binary("-", a, b)


def Mul(a, b):
    return Binary("*", a, b)


def Div(a, b):
    return Binary("/", a, b)


def Neg(a):
    return Unary("neg", a)


@dataclass(frozen=True)
class EvalPoint:
    """A parameter-space point plus parameter bindings.

    ``x``, ``y``, ``z`` may be floats or broadcast-compatible arrays.
    """

    x: object = 0.0
    y: object = 0.0
    z: object = 0.0
    params: Mapping[str, float] = None

    def env(self) -> dict:
        env = dict(self.params or {})
        env.update(x=self.x, y=self.y, z=self.z)
        return env


def parameters(expr: Expression) -> set[str]:
    """Names of all parameters referenced by ``expr``."""
    if isinstance(expr, Param):
        return {expr.name}
    if isinstance(expr, (Unary, Cheb)):
        return parameters(expr.arg)
    if isinstance(expr, Pow):
        return parameters(expr.base)
    if isinstance(expr, Binary):
        return parameters(expr.left) | parameters(expr.right)
    return set()


# --------------------------------------------------------------------------
# Parsing
# --------------------------------------------------------------------------

_TOKEN = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>[-+*/^(),])
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        if kind != "ws":
            tokens.append((kind, m.group(), pos))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def _advance(self):
        t = self.tokens[self.i]
        self.i += 1
        return t

    def _expect(self, value: str):
        kind, text, pos = self.tok
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ParseError(f"expected {value!r}, found {found}", pos)
        return self._advance()

    def _error(self, what: str):
        kind, text, pos = self.tok
        found = "end of input" if kind == "end" else repr(text)
        raise ParseError(f"expected {what}, found {found}", pos)

    def parse(self) -> Expression:
        node = self.expr()
        if self.tok[0] != "end":
            self._error("operator or end of input")
        return node

    def expr(self):
        node = self.term()
        while self.tok[1] in ("+", "-") and self.tok[0] == "op":
            op = self._advance()[1]
            node = Binary(op, node, self.term())
        return node

    def term(self):
        node = self.factor()
        while self.tok[1] in ("*", "/") and self.tok[0] == "op":
            op = self._advance()[1]
            node = Binary(op, node, self.factor())
        return node

    def factor(self):
        negate = False
        if self.tok[0] == "op" and self.tok[1] == "-":
            self._advance()
            negate = True
        node = self.atom()
        if self.tok[0] == "op" and self.tok[1] == "^":
            self._advance()
            node = Pow(node, self._int_literal("exponent", signed=True))
        return Neg(node) if negate else node

    def _int_literal(self, what: str, signed: bool) -> int:
        sign = 1
        if signed and self.tok[0] == "op" and self.tok[1] == "-":
            self._advance()
            sign = -1
        kind, text, pos = self.tok
        if kind != "number" or not text.isdigit():
            raise ParseError(f"{what} must be a literal integer", pos)
        self._advance()
        return sign * int(text)

    def atom(self):
        kind, text, pos = self.tok
        if kind == "number":
            self._advance()
            return Const(float(text))
        if kind == "ident":
            self._advance()
            if self.tok[1] == "(" and self.tok[0] == "op":
                return self._call(text, pos)
            if text in VARIABLES:
                return Var(text)
            return Param(text)
        if kind == "op" and text == "(":
            self._advance()
            node = self.expr()
            self._expect(")")
            return node
        self._error("number, identifier or '('")

    def _call(self, name: str, pos: int):
        if name not in FUNCS:
            raise UnknownFunctionError(f"unknown function {name!r}", pos)
        self._expect("(")
        if name == "cheb":
            order = self._int_literal("cheb order", signed=False)
            self._expect(",")
            arg = self.expr()
            self._expect(")")
            return Cheb(order, arg)
        arg = self.expr()
        self._expect(")")
        return Unary(name, arg)


def parse(text: str) -> Expression:
    """Parse ``text`` into an expression tree.

    Raises ``ParseError`` (with the character offset) on malformed input and
    ``UnknownFunctionError`` for calls to functions outside the grammar.
    """
    if not isinstance(text, str) or not text.strip():
        raise ParseError("empty expression", 0)
    return _Parser(text).parse()


# --------------------------------------------------------------------------
# Printing
# --------------------------------------------------------------------------

_PREC_ADD, _PREC_MUL, _PREC_NEG, _PREC_POW, _PREC_ATOM = 1, 2, 3, 4, 5


def _fmt_const(v: float) -> str:
    return repr(float(v))


def _render(node: Expression) -> tuple[str, int]:
    if isinstance(node, Const):
        if node.value < 0 or (node.value == 0 and np.signbit(node.value)):
            return "-" + _fmt_const(-node.value), _PREC_NEG
        return _fmt_const(node.value), _PREC_ATOM
    if isinstance(node, (Var, Param)):
        return node.name, _PREC_ATOM
    if isinstance(node, Cheb):
        return f"cheb({node.order}, {to_string(node.arg)})", _PREC_ATOM
    if isinstance(node, Unary):
        if node.op == "neg":
            return "-" + _wrap(node.arg, _PREC_POW), _PREC_NEG
        return f"{node.op}({to_string(node.arg)})", _PREC_ATOM
    if isinstance(node, Pow):
        return f"{_wrap(node.base, _PREC_ATOM)}^{node.exponent}", _PREC_POW
    if isinstance(node, Binary):
        if node.op in "+-":
            return f"{_wrap(node.left, _PREC_ADD)} {node.op} {_wrap(node.right, _PREC_MUL)}", _PREC_ADD
        return f"{_wrap(node.left, _PREC_MUL)}{node.op}{_wrap(node.right, _PREC_NEG)}", _PREC_MUL
    raise TypeError(f"not an expression node: {node!r}")


def _wrap(node: Expression, min_prec: int) -> str:
    text, prec = _render(node)
    return text if prec >= min_prec else f"({text})"


def to_string(expr: Expression) -> str:
    """Canonical text form; ``parse(to_string(parse(s))) == parse(s)``."""
    return _render(expr)[0]


# --------------------------------------------------------------------------
# Chebyshev polynomials
# --------------------------------------------------------------------------

def chebyshev(n: int, q):
    """C_n(q) = cos(n arccos q) via the three-term recurrence."""
    q = np.asarray(q, dtype=float)
    if n == 0:
        return np.ones_like(q)
    prev, cur = np.ones_like(q), q
    for _ in range(n - 1):
        prev, cur = cur, 2.0 * q * cur - prev
    return cur


def chebyshev_derivative(n: int, q):
    """C_n'(q) = n U_{n-1}(q), finite on the closed interval [-1, 1]."""
    q = np.asarray(q, dtype=float)
    if n == 0:
        return np.zeros_like(q)
    prev, cur = np.ones_like(q), 2.0 * q  # U_0, U_1
    if n == 1:
        return np.ones_like(q)
    for _ in range(n - 2):
        prev, cur = cur, 2.0 * q * cur - prev
    return n * cur


# --------------------------------------------------------------------------
# Evaluation with forward-mode tangents
# --------------------------------------------------------------------------

def _scale(der, factor):
    return None if der is None else der * factor


def _combine(da, db, fa, fb):
    """fa*da + fb*db with None meaning a zero tangent."""
    if da is None and db is None:
        return None
    if da is None:
        return db * fb
    if db is None:
        return da * fa
    return da * fa + db * fb


def _forward(node, env, seeds, k):
    if isinstance(node, Const):
        return np.float64(node.value), None
    if isinstance(node, (Var, Param)):
        try:
            val = env[node.name]
        except KeyError:
            raise UnboundParameterError(f"parameter {node.name!r} is not bound") from None
        val = np.asarray(val, dtype=float)
        if node.name in seeds:
            der = np.zeros((k,) + val.shape)
            der[seeds[node.name]] = 1.0
            return val, der
        return val, None
    if isinstance(node, Binary):
        a, da = _forward(node.left, env, seeds, k)
        b, db = _forward(node.right, env, seeds, k)
        if node.op == "+":
            return a + b, _combine(da, db, 1.0, 1.0)
        if node.op == "-":
            return a - b, _combine(da, db, 1.0, -1.0)
        if node.op == "*":
            return a * b, _combine(da, db, b, a)
        if np.any(b == 0):
            raise DomainError("division by zero")
        return a / b, _combine(da, db, 1.0 / b, -a / (b * b))
    if isinstance(node, Pow):
        a, da = _forward(node.base, env, seeds, k)
        p = node.exponent
        if p < 0 and np.any(a == 0):
            raise DomainError("division by zero in negative power")
        if p == 0:
            return np.ones_like(a), None
        val = a ** float(p)
        return val, _scale(da, p * a ** float(p - 1))
    if isinstance(node, Cheb):
        q, dq = _forward(node.arg, env, seeds, k)
        if np.any(np.abs(q) > 1.0 + CHEB_DOMAIN_TOL):
            raise DomainError(f"cheb argument outside [-1, 1] (|q| max {np.max(np.abs(q)):.3g})")
        q = np.clip(q, -1.0, 1.0)
        val = chebyshev(node.order, q)
        if dq is None:
            return val, None
        return val, dq * chebyshev_derivative(node.order, q)
    if isinstance(node, Unary):
        a, da = _forward(node.arg, env, seeds, k)
        op = node.op
        if op == "neg":
            return -a, _scale(da, -1.0)
        if op == "sin":
            return np.sin(a), _scale(da, np.cos(a))
        if op == "cos":
            return np.cos(a), _scale(da, -np.sin(a))
        if op == "sqrt":
            if np.any(a < 0):
                raise DomainError("sqrt of a negative number")
            val = np.sqrt(a)
            if da is None:
                return val, None
            if np.any(val == 0):
                raise NonDifferentiableError("sqrt is not differentiable at 0")
            return val, da * (0.5 / val)
        if op == "abs":
            if da is not None and np.any(a == 0):
                raise NonDifferentiableError("abs is not differentiable at 0")
            return np.abs(a), _scale(da, np.sign(a))
        if op == "sgn":
            if da is not None and np.any(a == 0):
                raise NonDifferentiableError("sgn is not differentiable at 0")
            return np.sign(a), _scale(da, 0.0)
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(expr: Expression, at: EvalPoint):
    """Value of ``expr`` at ``at`` (float, or array if the point is an array)."""
    val, _ = _forward(expr, at.env(), {}, 0)
    return val[()] if np.ndim(val) == 0 else val


def value_and_derivatives(expr: Expression, at: EvalPoint, wrt=VARIABLES):
    """Value and partial derivatives with respect to the names in ``wrt``.

    ``wrt`` may list variables or parameter names.  The derivative array has
    shape ``(len(wrt),) + value.shape``.
    """
    env = at.env()
    seeds = {name: i for i, name in enumerate(wrt)}
    val, der = _forward(expr, env, seeds, len(wrt))
    val = np.asarray(val, dtype=float)
    shape = np.broadcast_shapes(val.shape, *(np.shape(env[n]) for n in wrt if n in env))
    val = np.broadcast_to(val, shape)
    der = np.zeros((len(wrt),) + shape) if der is None else np.broadcast_to(der, (len(wrt),) + shape)
    return val, der


def gradient(expr: Expression, at: EvalPoint):
    """(d/dx, d/dy, d/dz) at ``at``, exact to machine precision."""
    _, der = value_and_derivatives(expr, at)
    if der.ndim == 1:
        return tuple(float(d) for d in der)
    return der
