"""Polynomial-style scalar expressions with forward-mode second-order AD.

Expressions use variables ``x1 .. xn``, numeric literals, the binary
operators ``+ - * /``, integer powers ``^``, parentheses and unary minus.
Precedence is ``^`` > unary ``-`` > ``* /`` > ``+ -`` with left
associativity for the binary arithmetic operators.  ``eval2`` returns the
value together with the exact gradient and dense Hessian, which is all the
smoothness the rest of the package needs (objectives and constraints are
assumed twice differentiable at the points where they are evaluated).
"""

from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np


class ParseError(ValueError):
    """Raised on malformed expression text; carries the offending position."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvalError(ArithmeticError):
    """Raised when an expression is not evaluable at the given point."""


# ---------------------------------------------------------------------------
# AST nodes


@dataclass(frozen=True)
class Const:
    value: float


@dataclass(frozen=True)
class Var:
    index: int  # 0-based


@dataclass(frozen=True)
class Add:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Sub:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Mul:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Div:
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Neg:
    operand: "Node"


@dataclass(frozen=True)
class Pow:
    base: "Node"
    exponent: int

    def __post_init__(self):
        if self.exponent < 0:
            raise ValueError("integer powers must have nonnegative exponent")


Node = Const | Var | Add | Sub | Mul | Div | Neg | Pow


@dataclass(frozen=True)
class ExprAST:
    """Parsed expression over a fixed number of variables."""

    root: Node
    n: int


@dataclass(frozen=True)
class SecondOrderValue:
    value: float
    gradient: np.ndarray
    hessian: np.ndarray


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>\d+\.\d*|\.\d+|\d+)(?P<expo>[eE][+-]?\d+)?"
    r"|(?P<var>x\d+)"
    r"|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        match = _TOKEN_RE.match(text, pos)
        if match is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"unexpected character {text[pos:].lstrip()[0]!r}", pos)
        if match.group("num") is not None:
            tokens.append(("num", match.group("num") + (match.group("expo") or ""), match.start("num")))
        elif match.group("var") is not None:
            tokens.append(("var", match.group("var"), match.start("var")))
        else:
            tokens.append(("op", match.group("op"), match.start("op")))
        pos = match.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, n: int):
        self.text = text
        self.n = n
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def advance(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_op(self, op: str):
        kind, val, pos = self.peek()
        if kind != "op" or val != op:
            raise ParseError(f"expected {op!r}", pos)
        return self.advance()

    def parse(self) -> Node:
        node = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos)
        return node

    def expr(self) -> Node:
        node = self.term()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "+-":
                self.advance()
                rhs = self.term()
                node = Add(node, rhs) if val == "+" else Sub(node, rhs)
            else:
                return node

    def term(self) -> Node:
        node = self.unary()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val in "*/":
                self.advance()
                rhs = self.unary()
                node = Mul(node, rhs) if val == "*" else Div(node, rhs)
            else:
                return node

    def unary(self) -> Node:
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.advance()
            return Neg(self.unary())
        return self.power()

    def power(self) -> Node:
        node = self.atom()
        while True:
            kind, val, _ = self.peek()
            if kind == "op" and val == "^":
                self.advance()
                node = Pow(node, self.exponent())
            else:
                return node

    def exponent(self) -> int:
        kind, val, pos = self.peek()
        if kind == "op" and val == "(":
            self.advance()
            k = self.exponent()
            self.expect_op(")")
            return k
        if kind != "num":
            raise ParseError("exponent must be a nonnegative integer", pos)
        self.advance()
        if not re.fullmatch(r"\d+", val):
            raise ParseError(f"non-integer exponent {val!r}", pos)
        return int(val)

    def atom(self) -> Node:
        kind, val, pos = self.advance()
        if kind == "num":
            return Const(float(val))
        if kind == "var":
            index = int(val[1:])
            if index < 1 or index > self.n:
                raise ParseError(f"unknown variable {val!r} (declared dimension {self.n})", pos)
            return Var(index - 1)
        if kind == "op" and val == "(":
            node = self.expr()
            self.expect_op(")")
            return node
        raise ParseError(f"unexpected token {val!r}", pos)


def parse(text: str, n: int) -> ExprAST:
    """Parse ``text`` over variables x1..xn into an AST."""
    if n < 0:
        raise ValueError("dimension must be nonnegative")
    return ExprAST(_Parser(text, n).parse(), n)


# ---------------------------------------------------------------------------
# Printing (used for round-trips and report echoing)

_PREC = {Add: 1, Sub: 1, Mul: 2, Div: 2, Neg: 3, Pow: 4, Const: 5, Var: 5}


def to_string(ast: ExprAST) -> str:
    return _fmt(ast.root, 0)


def _fmt(node: Node, parent_prec: int) -> str:
    prec = _PREC[type(node)]
    if isinstance(node, Const):
        value = node.value + 0.0  # normalize -0.0 so the text round-trips
        text = repr(value)
        return f"({text})" if value < 0 else text
    if isinstance(node, Var):
        text = f"x{node.index + 1}"
    elif isinstance(node, Add):
        text = f"{_fmt(node.left, 1)} + {_fmt(node.right, 2)}"
    elif isinstance(node, Sub):
        text = f"{_fmt(node.left, 1)} - {_fmt(node.right, 2)}"
    elif isinstance(node, Mul):
        text = f"{_fmt(node.left, 2)}*{_fmt(node.right, 3)}"
    elif isinstance(node, Div):
        text = f"{_fmt(node.left, 2)}/{_fmt(node.right, 3)}"
    elif isinstance(node, Neg):
        text = f"-{_fmt(node.operand, 3)}"
    elif isinstance(node, Pow):
        text = f"{_fmt(node.base, 5)}^{node.exponent}"
    else:  # pragma: no cover
        raise TypeError(node)
    return f"({text})" if prec < parent_prec else text


# ---------------------------------------------------------------------------
# Forward-mode evaluation with gradient and Hessian

_DIV_FLOOR = 1e-300


def eval2(ast: ExprAST, x: np.ndarray) -> SecondOrderValue:
    """Evaluate value, gradient and Hessian of ``ast`` at ``x``.

    Exact (up to rounding) for polynomial input; division requires a
    nonzero denominator at the evaluation point.
    """
    x = np.asarray(x, dtype=float)
    if x.shape != (ast.n,):
        raise ValueError(f"point has shape {x.shape}, expected ({ast.n},)")
    v, g, h = _eval(ast.root, x, ast.n)
    h = 0.5 * (h + h.T)
    return SecondOrderValue(v, g, h)


def _eval(node: Node, x: np.ndarray, n: int):
    if isinstance(node, Const):
        return node.value, np.zeros(n), np.zeros((n, n))
    if isinstance(node, Var):
        g = np.zeros(n)
        g[node.index] = 1.0
        return x[node.index], g, np.zeros((n, n))
    if isinstance(node, Neg):
        v, g, h = _eval(node.operand, x, n)
        return -v, -g, -h
    if isinstance(node, (Add, Sub)):
        va, ga, ha = _eval(node.left, x, n)
        vb, gb, hb = _eval(node.right, x, n)
        if isinstance(node, Add):
            return va + vb, ga + gb, ha + hb
        return va - vb, ga - gb, ha - hb
    if isinstance(node, Mul):
        va, ga, ha = _eval(node.left, x, n)
        vb, gb, hb = _eval(node.right, x, n)
        return (
            va * vb,
            ga * vb + va * gb,
            ha * vb + va * hb + np.outer(ga, gb) + np.outer(gb, ga),
        )
    if isinstance(node, Div):
        va, ga, ha = _eval(node.left, x, n)
        vb, gb, hb = _eval(node.right, x, n)
        if abs(vb) < _DIV_FLOOR:
            raise EvalError("division by zero")
        q = va / vb
        gq = (ga - q * gb) / vb
        hq = (ha - q * hb - np.outer(gq, gb) - np.outer(gb, gq)) / vb
        return q, gq, hq
    if isinstance(node, Pow):
        vb, gb, hb = _eval(node.base, x, n)
        k = node.exponent
        if k == 0:
            return 1.0, np.zeros(n), np.zeros((n, n))
        if k == 1:
            return vb, gb, hb
        vk1 = vb ** (k - 1)
        v = vk1 * vb
        g = k * vk1 * gb
        h = k * vk1 * hb + k * (k - 1) * vb ** (k - 2) * np.outer(gb, gb)
        return v, g, h
    raise TypeError(node)  # pragma: no cover
