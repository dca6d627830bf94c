"""Textual grammar for objective formulas.

Tokens: decimal numbers (optional fraction/exponent), variables
``u<level>_<index>`` (or ``u<level>`` when that level is scalar), operators
``+ - * ^`` and parentheses.  Precedence, tightest first: ``^`` (integer
exponents only, right-associative), unary minus, ``*``, then ``+``/``-``.

The printer emits a canonical form that parses back to a structurally
identical tree; the one caveat is that it writes negative constants with a
leading minus, which re-reads as Negate(Constant) — the parser itself never
produces negative constants, so parse -> print -> parse is idempotent.
"""

from __future__ import annotations

import re
from typing import List, Optional, Tuple

from .errors import FormulaError, UnknownVariableError
from .model import (
    Constant,
    Dims,
    Negate,
    Node,
    Power,
    Product,
    Sum,
    Var,
)

__all__ = ["parse_formula", "print_formula"]

_TOKEN_RE = re.compile(
    r"\s*(?:"
    r"(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>u\d+(?:_\d+)?)"
    r"|(?P<op>[-+*^()])"
    r")"
)

_MAX_EXPONENT = 1_000_000


class _Tokens:
    def __init__(self, text: str):
        self.text = text
        self.items: List[Tuple[str, str, int]] = []  # (kind, value, position)
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if m is None or m.end() == pos:
                stripped = text[pos:].lstrip()
                if not stripped:
                    break
                at = len(text) - len(stripped)
                raise FormulaError(
                    "unexpected character %r" % text[at], column=at + 1
                )
            if m.group("number") is not None:
                self.items.append(("number", m.group("number"), m.start("number")))
            elif m.group("ident") is not None:
                self.items.append(("ident", m.group("ident"), m.start("ident")))
            else:
                self.items.append(("op", m.group("op"), m.start("op")))
            pos = m.end()
        self.at = 0

    def peek(self) -> Optional[Tuple[str, str, int]]:
        return self.items[self.at] if self.at < len(self.items) else None

    def next(self) -> Tuple[str, str, int]:
        tok = self.peek()
        if tok is None:
            raise FormulaError("unexpected end of formula", column=len(self.text) + 1)
        self.at += 1
        return tok


class _Parser:
    def __init__(self, text: str, dims: Dims):
        self.tokens = _Tokens(text)
        self.dims = dims

    def parse(self) -> Node:
        node = self.expr()
        left = self.tokens.peek()
        if left is not None:
            raise FormulaError("trailing input %r" % left[1], column=left[2] + 1)
        return node

    def expr(self) -> Node:
        terms = [self.term()]
        while True:
            tok = self.tokens.peek()
            if tok is None or tok[0] != "op" or tok[1] not in "+-":
                break
            self.tokens.next()
            nxt = self.term()
            terms.append(Negate(nxt) if tok[1] == "-" else nxt)
        return terms[0] if len(terms) == 1 else Sum(tuple(terms))

    def term(self) -> Node:
        factors = [self.factor()]
        while True:
            tok = self.tokens.peek()
            if tok is None or tok[0] != "op" or tok[1] != "*":
                break
            self.tokens.next()
            factors.append(self.factor())
        return factors[0] if len(factors) == 1 else Product(tuple(factors))

    def factor(self) -> Node:
        tok = self.tokens.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "-":
            self.tokens.next()
            return Negate(self.factor())
        return self.power()

    def power(self) -> Node:
        base = self.atom()
        tok = self.tokens.peek()
        if tok is not None and tok[0] == "op" and tok[1] == "^":
            self.tokens.next()
            return Power(base, self.exponent())
        return base

    def exponent(self) -> int:
        tok = self.tokens.next()
        if tok[0] != "number" or not tok[1].isdigit():
            raise FormulaError(
                "exponent must be a positive integer, got %r" % tok[1],
                column=tok[2] + 1,
            )
        value = int(tok[1])
        if value < 1:
            raise FormulaError("exponent must be >= 1", column=tok[2] + 1)
        nxt = self.tokens.peek()
        if nxt is not None and nxt[0] == "op" and nxt[1] == "^":
            self.tokens.next()
            value = value ** self.exponent()  # right-associative chain
        if value > _MAX_EXPONENT:
            raise FormulaError("exponent %d is unreasonably large" % value,
                               column=tok[2] + 1)
        return value

    def atom(self) -> Node:
        tok = self.tokens.next()
        kind, text, pos = tok
        if kind == "number":
            return Constant(float(text))
        if kind == "ident":
            return self.variable(text, pos)
        if kind == "op" and text == "(":
            inner = self.expr()
            close = self.tokens.next()
            if close[0] != "op" or close[1] != ")":
                raise FormulaError("expected ')'", column=close[2] + 1)
            return inner
        raise FormulaError("unexpected token %r" % text, column=pos + 1)

    def variable(self, text: str, pos: int) -> Var:
        if "_" in text:
            lev_s, idx_s = text[1:].split("_")
            level, index = int(lev_s), int(idx_s)
        else:
            level, index = int(text[1:]), 1
        if not 1 <= level <= self.dims.levels:
            raise UnknownVariableError(
                "variable %r: the hierarchy has levels 1..%d"
                % (text, self.dims.levels),
                column=pos + 1,
            )
        width = self.dims.m[level - 1]
        if "_" not in text and width != 1:
            raise FormulaError(
                "%r is ambiguous: level %d has width %d; write u%d_<index>"
                % (text, level, width, level),
                column=pos + 1,
            )
        if not 1 <= index <= width:
            raise UnknownVariableError(
                "variable %r: level %d has width %d" % (text, level, width),
                column=pos + 1,
            )
        return Var(level, index)


def parse_formula(text: str, dims: Dims) -> Node:
    """Parse a formula against a hierarchy shape.  1-based variables."""
    return _Parser(text, dims).parse()


def _num(value: float) -> str:
    if value == int(value) and abs(value) < 1e15:
        return str(int(value))
    return repr(value)


def print_formula(node: Node) -> str:
    """Canonical text for a tree; parses back to the same structure."""
    if isinstance(node, Constant):
        return _num(node.value)
    if isinstance(node, Var):
        return "u%d_%d" % (node.level, node.index)
    if isinstance(node, Sum):
        parts = [_sum_child(node.terms[0])]
        for t in node.terms[1:]:
            if isinstance(t, Negate):
                parts.append("- " + _sum_child(t.child))
            else:
                parts.append("+ " + _sum_child(t))
        return " ".join(parts)
    if isinstance(node, Product):
        return "*".join(_product_child(f) for f in node.factors)
    if isinstance(node, Power):
        base = print_formula(node.base)
        if not isinstance(node.base, (Var,)) and not (
            isinstance(node.base, Constant) and node.base.value >= 0
        ):
            base = "(%s)" % base
        return "%s^%d" % (base, node.exponent)
    if isinstance(node, Negate):
        inner = print_formula(node.child)
        if isinstance(node.child, (Sum, Product)):
            inner = "(%s)" % inner
        return "-" + inner
    raise TypeError("not an expression node: %r" % (node,))


def _sum_child(node: Node) -> str:
    text = print_formula(node)
    return "(%s)" % text if isinstance(node, Sum) else text


def _product_child(node: Node) -> str:
    text = print_formula(node)
    return "(%s)" % text if isinstance(node, (Sum, Product)) else text
