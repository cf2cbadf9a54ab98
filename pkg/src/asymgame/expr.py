"""Tiny arithmetic expression language in one variable ``y``.

Model coefficients are written as strings such as
``"0.5 - tanh(y)"`` and compiled once into an AST.  Grammar::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := NUMBER | 'y' | FUNC '(' args ')' | '-' factor | '(' expr ')'

Evaluation works on floats and on numpy arrays alike.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Expr", "Num", "Var", "Neg", "BinOp", "Call",
    "ExprError", "parse_expr", "eval_expr", "pretty",
]


class ExprError(ValueError):
    """Parse or evaluation failure.  ``offset`` is the byte offset when known."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at offset {offset})"
        super().__init__(message)
        self.offset = offset


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    operand: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Call:
    name: str
    args: tuple


Expr = Num | Var | Neg | BinOp | Call

_UNARY = {"exp": np.exp, "tanh": np.tanh, "sin": np.sin, "cos": np.cos, "abs": np.abs}
_BINARY = {"min": np.minimum, "max": np.maximum}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<op>[-+*/(),]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        mt = _TOKEN.match(text, pos)
        if mt is None:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExprError(f"unexpected character {text[start]!r}", start)
        kind = mt.lastgroup
        tokens.append((kind, mt.group(kind), mt.start(kind)))
        pos = mt.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value: str):
        kind, text, off = self.take()
        if text != value or kind == "end":
            found = "end of input" if kind == "end" else repr(text)
            raise ExprError(f"expected {value!r}, found {found}", off)

    def expr(self) -> Expr:
        node = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.term())
        return node

    def term(self) -> Expr:
        node = self.factor()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            node = BinOp(op, node, self.factor())
        return node

    def factor(self) -> Expr:
        kind, text, off = self.take()
        if kind == "num":
            return Num(float(text))
        if kind == "name":
            if text == "y":
                return Var()
            if text not in _UNARY and text not in _BINARY:
                raise ExprError(f"unknown identifier {text!r}", off)
            self.expect("(")
            args = [self.expr()]
            while self.peek()[1] == "," and self.peek()[0] == "op":
                self.take()
                args.append(self.expr())
            self.expect(")")
            want = 1 if text in _UNARY else 2
            if len(args) != want:
                raise ExprError(f"{text} takes {want} argument(s), got {len(args)}", off)
            return Call(text, tuple(args))
        if kind == "op" and text == "-":
            return Neg(self.factor())
        if kind == "op" and text == "(":
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if kind == "end" else repr(text)
        raise ExprError(f"unexpected {found}", off)


def parse_expr(text: str) -> Expr:
    """Parse ``text`` into an AST; raises :class:`ExprError` on bad input."""
    if not text or not text.strip():
        raise ExprError("empty expression", 0)
    parser = _Parser(text)
    node = parser.expr()
    kind, tok, off = parser.peek()
    if kind != "end":
        raise ExprError(f"trailing input {tok!r}", off)
    return node


def pretty(e: Expr) -> str:
    """Fully parenthesized text that re-parses to an equal AST."""
    if isinstance(e, Num):
        return repr(float(e.value))
    if isinstance(e, Var):
        return "y"
    if isinstance(e, Neg):
        return f"(-{pretty(e.operand)})"
    if isinstance(e, BinOp):
        return f"({pretty(e.left)} {e.op} {pretty(e.right)})"
    return f"{e.name}({', '.join(pretty(a) for a in e.args)})"


def _eval(e: Expr, y):
    if isinstance(e, Num):
        return e.value
    if isinstance(e, Var):
        return y
    if isinstance(e, Neg):
        return -_eval(e.operand, y)
    if isinstance(e, BinOp):
        a = _eval(e.left, y)
        b = _eval(e.right, y)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if np.any(np.asarray(b) == 0.0):
            raise ExprError("division by zero")
        return a / b
    if e.name in _UNARY:
        return _UNARY[e.name](_eval(e.args[0], y))
    return _BINARY[e.name](_eval(e.args[0], y), _eval(e.args[1], y))


def eval_expr(e: Expr, y):
    """Evaluate ``e`` at ``y`` (float or array).  Result broadcasts to ``y``'s shape."""
    with np.errstate(over="ignore", invalid="ignore"):
        out = _eval(e, y)
    if np.ndim(y) == 0:
        out = float(out)
        if not np.isfinite(out):
            raise ExprError(f"non-finite result at y={float(y)!r}")
        return out
    out = np.broadcast_to(np.asarray(out, dtype=float), np.shape(y)).copy()
    if not np.all(np.isfinite(out)):
        bad = np.asarray(y)[~np.isfinite(out)].flat[0]
        raise ExprError(f"non-finite result at y={float(bad)!r}")
    return out
