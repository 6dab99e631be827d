"""A small arithmetic expression language with exact symbolic differentiation.

Expressions are parsed from strings like ``"0.5*(x1^2 + u1^2)"`` over the
variables ``t``, ``x1..xn``, ``u1..un``, ``xa1..xan``, ``xb1..xbn``. The
syntax trees support evaluation (scalars or numpy arrays, elementwise) and
repeated partial differentiation. No simplification is done beyond constant
folding.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = ["Expr", "parse", "differentiate", "evaluate", "free_variables", "ParseError", "EvalError"]

_FUNCS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "log": np.log,
    "sqrt": np.sqrt,
    "cosh": np.cosh,
    "sinh": np.sinh,
    "abs": np.abs,
    # internal: produced by differentiating abs; evaluates to 0 at the kink
    "sign": np.sign,
}

_VAR_RE = re.compile(r"(t|x|u|xa|xb)([0-9]*)$")


class ParseError(ValueError):
    """Syntax or name error, carrying the byte offset into the source."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalError(ValueError):
    """Raised when evaluation hits an unbound name or a non-finite value."""


class Expr:
    __slots__ = ()

    def __repr__(self):
        return f"Expr({to_string(self)!r})"


@dataclass(frozen=True, repr=False)
class Const(Expr):
    value: float


@dataclass(frozen=True, repr=False)
class Var(Expr):
    name: str


@dataclass(frozen=True, repr=False)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, repr=False)
class Bin(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True, repr=False)
class Call(Expr):
    fn: str
    arg: Expr


# -- smart constructors (constant folding only) ------------------------------


def _const(v: float) -> Const:
    return Const(float(v))


def _add(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value + b.value)
    if isinstance(a, Const) and a.value == 0.0:
        return b
    if isinstance(b, Const) and b.value == 0.0:
        return a
    return Bin("+", a, b)


def _sub(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value - b.value)
    if isinstance(b, Const) and b.value == 0.0:
        return a
    if isinstance(a, Const) and a.value == 0.0:
        return _neg(b)
    return Bin("-", a, b)


def _mul(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value * b.value)
    if isinstance(a, Const):
        if a.value == 0.0:
            return _const(0.0)
        if a.value == 1.0:
            return b
    if isinstance(b, Const):
        if b.value == 0.0:
            return _const(0.0)
        if b.value == 1.0:
            return a
    return Bin("*", a, b)


def _div(a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and a.value == 0.0:
        return _const(0.0)
    if isinstance(b, Const) and b.value == 1.0:
        return a
    return Bin("/", a, b)


def _pow(a: Expr, b: Expr) -> Expr:
    if isinstance(b, Const):
        if b.value == 1.0:
            return a
        if b.value == 0.0:
            return _const(1.0)
    if isinstance(a, Const) and isinstance(b, Const):
        return _const(a.value**b.value)
    return Bin("^", a, b)


def _neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return _const(-a.value)
    return Neg(a)


# -- parsing ------------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN_RE.match(source, pos)
        if m is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", pos + len(source[pos:]) - len(stripped))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, tokens, dim: int):
        self.tokens = tokens
        self.i = 0
        self.dim = dim

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, text, off = self.peek()
        if kind != "op" or text != op:
            raise ParseError(f"expected {op!r}", off)
        self.next()

    def parse_expr(self) -> Expr:
        node = self.parse_term()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "+-":
                self.next()
                rhs = self.parse_term()
                node = Bin(text, node, rhs)
            else:
                return node

    def parse_term(self) -> Expr:
        node = self.parse_unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "op" and text in "*/":
                self.next()
                rhs = self.parse_unary()
                node = Bin(text, node, rhs)
            else:
                return node

    def parse_unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "op" and text == "-":
            self.next()
            return _neg(self.parse_unary())
        return self.parse_power()

    def parse_power(self) -> Expr:
        base = self.parse_atom()
        kind, text, _ = self.peek()
        if kind == "op" and text == "^":
            self.next()
            # right-associative; exponent binds tighter than unary minus
            kind2, text2, _ = self.peek()
            if kind2 == "op" and text2 == "-":
                self.next()
                exponent = _neg(self.parse_power())
            else:
                exponent = self.parse_power()
            return Bin("^", base, exponent)
        return base

    def parse_atom(self) -> Expr:
        kind, text, off = self.next()
        if kind == "num":
            return _const(float(text))
        if kind == "name":
            if text in _FUNCS:
                self.expect_op("(")
                arg = self.parse_expr()
                self.expect_op(")")
                return Call(text, arg)
            return self._variable(text, off)
        if kind == "op" and text == "(":
            node = self.parse_expr()
            self.expect_op(")")
            return node
        raise ParseError("expected a value", off)

    def _variable(self, name: str, off: int) -> Var:
        m = _VAR_RE.match(name)
        if m is None:
            raise ParseError(f"unknown identifier {name!r}", off)
        stem, index = m.groups()
        if stem == "t":
            if index:
                raise ParseError(f"unknown identifier {name!r}", off)
            return Var("t")
        if not index:
            raise ParseError(f"variable {name!r} is missing an index", off)
        if not (1 <= int(index) <= self.dim):
            raise ParseError(
                f"variable index out of range 1..{self.dim}: {name!r}", off
            )
        return Var(name)


def parse(source: str, dim: int) -> Expr:
    """Parse source into an expression tree for problems of dimension dim."""
    if not source or not source.strip():
        raise ParseError("empty expression", 0)
    parser = _Parser(_tokenize(source), dim)
    node = parser.parse_expr()
    kind, text, off = parser.peek()
    if kind != "end":
        raise ParseError(f"unexpected {text!r}", off)
    return node


# -- evaluation ---------------------------------------------------------------


def evaluate(e: Expr, env: dict):
    """Evaluate e elementwise; env maps variable names to floats/arrays.

    Raises EvalError on unbound variables and on any non-finite result
    (division by zero, log/sqrt of a negative argument, overflow, ...).
    """
    with np.errstate(all="ignore"):
        out = _eval(e, env)
    if not np.all(np.isfinite(out)):
        raise EvalError(f"non-finite value while evaluating {to_string(e)!r}")
    return out


def _eval(e: Expr, env: dict):
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name!r}") from None
    if isinstance(e, Neg):
        return -_eval(e.arg, env)
    if isinstance(e, Call):
        return _FUNCS[e.fn](_eval(e.arg, env))
    left = _eval(e.left, env)
    right = _eval(e.right, env)
    if e.op == "+":
        return left + right
    if e.op == "-":
        return left - right
    if e.op == "*":
        return left * right
    if e.op == "/":
        return np.true_divide(left, right)
    return np.power(left, right)


def free_variables(e: Expr) -> set:
    if isinstance(e, Const):
        return set()
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return free_variables(e.arg)
    if isinstance(e, Call):
        return free_variables(e.arg)
    return free_variables(e.left) | free_variables(e.right)


# -- differentiation ----------------------------------------------------------


def differentiate(e: Expr, var: str) -> Expr:
    """Exact partial derivative of e with respect to the named variable.

    abs differentiates to a sign factor that evaluates to 0 at the kink.
    """
    if isinstance(e, Const):
        return _const(0.0)
    if isinstance(e, Var):
        return _const(1.0) if e.name == var else _const(0.0)
    if isinstance(e, Neg):
        return _neg(differentiate(e.arg, var))
    if isinstance(e, Call):
        return _mul(_chain_outer(e), differentiate(e.arg, var))
    da = differentiate(e.left, var)
    db = differentiate(e.right, var)
    a, b = e.left, e.right
    if e.op == "+":
        return _add(da, db)
    if e.op == "-":
        return _sub(da, db)
    if e.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if e.op == "/":
        return _sub(_div(da, b), _div(_mul(a, db), _mul(b, b)))
    # power
    if isinstance(b, Const):
        return _mul(_mul(b, _pow(a, _const(b.value - 1.0))), da)
    if isinstance(a, Const):
        return _mul(_mul(_const(math.log(a.value)), _pow(a, b)), db)
    log_term = _mul(db, Call("log", a))
    ratio_term = _div(_mul(b, da), a)
    return _mul(_pow(a, b), _add(log_term, ratio_term))


def _chain_outer(e: Call) -> Expr:
    arg = e.arg
    if e.fn == "sin":
        return Call("cos", arg)
    if e.fn == "cos":
        return _neg(Call("sin", arg))
    if e.fn == "exp":
        return e
    if e.fn == "log":
        return _div(_const(1.0), arg)
    if e.fn == "sqrt":
        return _div(_const(0.5), e)
    if e.fn == "cosh":
        return Call("sinh", arg)
    if e.fn == "sinh":
        return Call("cosh", arg)
    if e.fn == "abs":
        return Call("sign", arg)
    # sign: zero almost everywhere
    return _const(0.0)


# -- printing -----------------------------------------------------------------

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def to_string(e: Expr) -> str:
    """Render the tree; parse(to_string(e)) evaluates identically to e."""
    return _render(e, 0)


def _render(e: Expr, parent_prec: int) -> str:
    if isinstance(e, Const):
        if e.value < 0:
            return _wrap(repr(e.value), _PREC["neg"], parent_prec)
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Call):
        return f"{e.fn}({_render(e.arg, 0)})"
    if isinstance(e, Neg):
        return _wrap(f"-{_render(e.arg, _PREC['neg'])}", _PREC["neg"], parent_prec)
    prec = _PREC[e.op]
    if e.op == "^":
        body = f"{_render(e.left, prec + 1)}^{_render(e.right, prec)}"
    else:
        body = f"{_render(e.left, prec)} {e.op} {_render(e.right, prec + 1)}"
    return _wrap(body, prec, parent_prec)


def _wrap(body: str, prec: int, parent_prec: int) -> str:
    return f"({body})" if prec < parent_prec else body
