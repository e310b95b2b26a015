"""Expression language for terminal payoffs.

A payoff is a function of the single variable ``x`` (the terminal state of
the driving process).  The language covers arithmetic (+ - * / ^ with an
integer exponent), unary minus, and the functions exp, log, abs, sqrt, tanh
(unary) plus min, max (binary).  Parsed trees are immutable and hashable, so
they can be shared freely between solver calls.
"""

import math
import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "PayoffParseError",
    "EvalDomainError",
    "Expr",
    "Lit",
    "Var",
    "Neg",
    "BinOp",
    "Pow",
    "Call",
    "FUNCTIONS",
    "parse",
    "evaluate",
    "pretty_print",
]

# function name -> arity
FUNCTIONS = {"exp": 1, "log": 1, "abs": 1, "sqrt": 1, "tanh": 1, "min": 2, "max": 2}


class PayoffParseError(ValueError):
    """Malformed payoff text.  `offset` is the byte position of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class EvalDomainError(ArithmeticError):
    """Evaluation left the real line: log/sqrt of a negative, division by zero."""


class Expr:
    """Base class of expression nodes.  Instances are frozen after creation."""

    __slots__ = ()


@dataclass(frozen=True)
class Lit(Expr):
    value: float


@dataclass(frozen=True)
class Var(Expr):
    pass


@dataclass(frozen=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True)
class BinOp(Expr):
    op: str  # one of + - * /
    lhs: Expr
    rhs: Expr


@dataclass(frozen=True)
class Pow(Expr):
    base: Expr
    exponent: int


@dataclass(frozen=True)
class Call(Expr):
    func: str
    args: tuple


_TOKEN_RE = re.compile(
    r"(?P<number>(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/^(),])"
)


def _tokenize(text):
    tokens = []
    pos = 0
    n = len(text)
    while pos < n:
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PayoffParseError(f"unexpected character {text[pos]!r}", pos)
        kind = m.lastgroup
        tokens.append((kind, m.group(), pos))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def _peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def _next(self, expect: str):
        tok = self._peek()
        if tok is None:
            raise PayoffParseError(f"expected {expect} but input ended", len(self.text))
        self.i += 1
        return tok

    def _at_op(self, chars):
        tok = self._peek()
        return tok is not None and tok[0] == "op" and tok[1] in chars

    def parse(self) -> Expr:
        if not self.tokens:
            raise PayoffParseError("empty payoff expression", 0)
        node = self.expr()
        tok = self._peek()
        if tok is not None:
            raise PayoffParseError(f"unexpected trailing input {tok[1]!r}", tok[2])
        return node

    def expr(self) -> Expr:
        node = self.term()
        while self._at_op("+-"):
            op = self._next("operator")[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self._at_op("*/"):
            op = self._next("operator")[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        # '-' here (rather than inside atom) makes ^ bind tighter than unary
        # minus: -x^2 parses as -(x^2).  Negated literals fold to literals so
        # printed trees re-parse to themselves.
        if self._at_op("-"):
            self._next("operator")
            inner = self.factor()
            if isinstance(inner, Lit):
                return Lit(-inner.value)
            return Neg(inner)
        node = self.atom()
        if self._at_op("^"):
            self._next("operator")
            node = Pow(node, self._integer())
        return node

    def _integer(self) -> int:
        sign = 1
        if self._at_op("-"):
            self._next("operator")
            sign = -1
        kind, text, pos = self._next("an integer exponent")
        if kind != "number" or not text.isdigit():
            raise PayoffParseError("exponent must be an integer literal", pos)
        return sign * int(text)

    def atom(self) -> Expr:
        kind, text, pos = self._next("a value")
        if kind == "number":
            return Lit(float(text))
        if kind == "name":
            if text == "x":
                return Var()
            if text in FUNCTIONS:
                return self._call(text, pos)
            raise PayoffParseError(f"unknown identifier {text!r}", pos)
        if kind == "op" and text == "(":
            node = self.expr()
            self._expect_op(")")
            return node
        raise PayoffParseError(f"unexpected token {text!r}", pos)

    def _call(self, func: str, pos: int) -> Expr:
        arity = FUNCTIONS[func]
        self._expect_op("(")
        args = [self.expr()]
        while self._at_op(","):
            self._next("operator")
            args.append(self.expr())
        self._expect_op(")")
        if len(args) != arity:
            raise PayoffParseError(
                f"{func} takes {arity} argument{'s' if arity > 1 else ''}, got {len(args)}",
                pos,
            )
        return Call(func, tuple(args))

    def _expect_op(self, op: str):
        tok = self._peek()
        if tok is None:
            raise PayoffParseError(f"expected {op!r} but input ended", len(self.text))
        if tok[0] != "op" or tok[1] != op:
            raise PayoffParseError(f"expected {op!r}, found {tok[1]!r}", tok[2])
        self.i += 1


def parse(text: str) -> Expr:
    """Parse payoff text into an expression tree.

    Raises PayoffParseError (with a byte offset) on syntax errors, unknown
    identifiers, and wrong function arity.
    """
    return _Parser(text).parse()


def _eval(node: Expr, x):
    if isinstance(node, Lit):
        return node.value
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    if isinstance(node, BinOp):
        a = _eval(node.lhs, x)
        b = _eval(node.rhs, x)
        if node.op == "+":
            return a + b
        if node.op == "-":
            return a - b
        if node.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0.0):
            raise EvalDomainError("division by zero")
        return a / b
    if isinstance(node, Pow):
        base = _eval(node.base, x)
        if node.exponent < 0 and np.any(np.asarray(base) == 0.0):
            raise EvalDomainError("division by zero (negative exponent at 0)")
        return np.asarray(base) ** node.exponent if isinstance(base, np.ndarray) else base**node.exponent
    if isinstance(node, Call):
        args = [_eval(a, x) for a in node.args]
        if node.func == "exp":
            return np.exp(args[0])
        if node.func == "log":
            if np.any(np.asarray(args[0]) <= 0.0):
                raise EvalDomainError("log of a non-positive value")
            return np.log(args[0])
        if node.func == "abs":
            return np.abs(args[0])
        if node.func == "sqrt":
            if np.any(np.asarray(args[0]) < 0.0):
                raise EvalDomainError("sqrt of a negative value")
            return np.sqrt(args[0])
        if node.func == "tanh":
            return np.tanh(args[0])
        if node.func == "min":
            return np.minimum(args[0], args[1])
        return np.maximum(args[0], args[1])
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(expr: Expr, x):
    """Evaluate `expr` at `x`.

    `x` may be a float or a numpy array; the result has matching shape.
    Evaluation is pure and deterministic.  Raises EvalDomainError when the
    value would leave the reals.
    """
    if isinstance(x, np.ndarray) and x.ndim > 0:
        xs = np.asarray(x, dtype=float)
        out = _eval(expr, xs)
        out = np.asarray(out, dtype=float)
        if out.shape != xs.shape:
            out = np.full(xs.shape, float(out))
        return out
    out = _eval(expr, float(x))
    return float(out)


def _fmt(value: float) -> str:
    return repr(float(value))


def pretty_print(expr: Expr) -> str:
    """Canonical fully parenthesized rendering; parses back to an equal tree."""
    if isinstance(expr, Lit):
        return _fmt(expr.value)
    if isinstance(expr, Var):
        return "x"
    if isinstance(expr, Neg):
        return f"(-{pretty_print(expr.arg)})"
    if isinstance(expr, BinOp):
        return f"({pretty_print(expr.lhs)} {expr.op} {pretty_print(expr.rhs)})"
    if isinstance(expr, Pow):
        base = pretty_print(expr.base)
        # a bare negative literal base would re-parse as -(base^n)
        if isinstance(expr.base, Lit) and math.copysign(1.0, expr.base.value) < 0:
            base = f"({base})"
        return f"({base}^{expr.exponent})"
    if isinstance(expr, Call):
        return f"{expr.func}({', '.join(pretty_print(a) for a in expr.args)})"
    raise TypeError(f"not an expression node: {expr!r}")
