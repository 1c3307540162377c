"""Precedence-climbing parser for the symbol expression grammar.

Grammar::

    expr    := term (('+' | '-') term)*
    term    := unary (('*' | '/') unary)*
    unary   := '-' unary | '+' unary | power
    power   := atom ('^' unary)?
    atom    := number | name | name '(' expr ')' | '(' expr ')'

``^`` is right associative and binds tighter than unary minus, so ``-x^2``
means ``-(x^2)``. ``I`` is the imaginary unit and ``pi`` the circle constant.
"""

from __future__ import annotations

import math
import re
from typing import Iterable, Mapping

from .expr import Const, SymExpr, Var, add, div, mul, neg, power, sub
from .functions import BUILTINS, FunctionDef

RESERVED = {"I": Const(1j), "pi": Const(math.pi)}

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z][A-Za-z0-9_]*)|(?P<op>[-+*/^()]))"
)


class ParseError(ValueError):
    """Syntax or name error with the character offset where it was detected."""

    def __init__(self, message: str, position: int, text: str = ""):
        super().__init__(f"{message} at offset {position}")
        self.position = position
        self.text = text


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ParseError(f"unexpected character {text[start]!r}", start, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text, variables, functions):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0
        self.variables = variables
        self.functions = functions

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect(self, value):
        kind, val, pos = self.take()
        if val != value or kind == "end":
            what = "end of input" if kind == "end" else repr(val)
            raise ParseError(f"expected {value!r}, found {what}", pos, self.text)

    def parse(self) -> SymExpr:
        e = self.expr()
        kind, val, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {val!r}", pos, self.text)
        return e

    def expr(self):
        left = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.term()
            left = add(left, right) if op == "+" else sub(left, right)
        return left

    def term(self):
        left = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            right = self.unary()
            left = mul(left, right) if op == "*" else div(left, right)
        return left

    def unary(self):
        kind, val, _ = self.peek()
        if kind == "op" and val == "-":
            self.take()
            return neg(self.unary())
        if kind == "op" and val == "+":
            self.take()
            return self.unary()
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return power(base, self.unary())
        return base

    def atom(self):
        kind, val, pos = self.take()
        if kind == "num":
            return Const(float(val) if any(c in val for c in ".eE") else int(val))
        if kind == "name":
            if self.peek()[1] == "(" and self.peek()[0] == "op":
                if val == "sqrt":
                    self.take()
                    arg = self.expr()
                    self.expect(")")
                    return power(arg, Const(0.5))
                fn = self.functions.get(val)
                if fn is None:
                    raise ParseError(f"unknown function {val!r}", pos, self.text)
                self.take()
                arg = self.expr()
                self.expect(")")
                return fn(arg)
            if val in RESERVED:
                return RESERVED[val]
            if self.variables is not None and val not in self.variables:
                raise ParseError(f"unknown identifier {val!r}", pos, self.text)
            return Var(val)
        if kind == "op" and val == "(":
            e = self.expr()
            self.expect(")")
            return e
        what = "end of input" if kind == "end" else repr(val)
        raise ParseError(f"unexpected {what}", pos, self.text)


def parse(
    text: str,
    chart=None,
    variables: Iterable[str] | None = None,
    functions: Mapping[str, FunctionDef] | None = None,
) -> SymExpr:
    """Parse ``text`` into an expression.

    Args:
        text: infix source.
        chart: optional chart; when given, only its coordinate names are
            accepted as variables.
        variables: extra (or, without a chart, the only) accepted names.
            With neither argument every identifier is accepted.
        functions: function table, defaults to the builtins.
    """
    allowed = None
    if chart is not None or variables is not None:
        allowed = set(variables or ())
        if chart is not None:
            allowed |= set(chart.coords)
    return _Parser(text, allowed, dict(functions or BUILTINS)).parse()
