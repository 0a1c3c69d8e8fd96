"""
Tiny expression language for boundary functions of the normalized angle x.

Grammar::

    expr    := term (("+" | "-") term)*
    term    := unary (("*" | "/") unary)*
    unary   := ("+" | "-") unary | primary
    primary := NUMBER | "x" | "pi" | ("sin" | "cos") "(" expr ")" | "(" expr ")"

The unicode forms "·", "−" and "π" are accepted as well.
"""

from __future__ import annotations

import re

import numpy as np


class ExpressionError(ValueError):
    def __init__(self, message: str, text: str, position: int):
        super().__init__(f"{message} at position {position} in {text!r}")
        self.text = text
        self.position = position


_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_]+|π)|(?P<op>[-+*/()·−]))"
)
_ALIASES = {"·": "*", "−": "-", "π": "pi"}
_FUNCS = {"sin": np.sin, "cos": np.cos}


def _tokenize(text: str):
    pos = 0
    tokens = []
    while pos < len(text):
        if text[pos:].strip() == "":
            break
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            start = pos + len(text[pos:]) - len(text[pos:].lstrip())
            raise ExpressionError(f"unexpected character {text[start]!r}", text, start)
        kind = m.lastgroup
        value = m.group(kind)
        tokens.append((kind, _ALIASES.get(value, value), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message, tok=None):
        tok = tok or self.peek()
        raise ExpressionError(message, self.text, tok[2])

    def expect(self, value):
        tok = self.take()
        if tok[1] != value:
            self.fail(f"expected {value!r}", tok)

    def parse(self):
        node = self.expr()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[1]!r}")
        return node

    def expr(self):
        node = self.term()
        while self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            rhs = self.term()
            node = (lambda a, b: lambda x: a(x) + b(x))(node, rhs) if op == "+" else \
                (lambda a, b: lambda x: a(x) - b(x))(node, rhs)
        return node

    def term(self):
        node = self.unary()
        while self.peek()[1] in ("*", "/"):
            op = self.take()[1]
            rhs = self.unary()
            node = (lambda a, b: lambda x: a(x) * b(x))(node, rhs) if op == "*" else \
                (lambda a, b: lambda x: a(x) / b(x))(node, rhs)
        return node

    def unary(self):
        if self.peek()[1] in ("+", "-"):
            op = self.take()[1]
            inner = self.unary()
            return inner if op == "+" else (lambda a: lambda x: -a(x))(inner)
        return self.primary()

    def primary(self):
        kind, value, pos = tok = self.take()
        if kind == "num":
            c = float(value)
            return lambda x: c + 0.0 * x
        if kind == "name":
            if value == "x":
                return lambda x: x
            if value == "pi":
                return lambda x: np.pi + 0.0 * x
            if value in _FUNCS:
                fn = _FUNCS[value]
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return lambda x: fn(arg(x))
            self.fail(f"unknown name {value!r}", tok)
        if value == "(":
            node = self.expr()
            self.expect(")")
            return node
        if kind == "end":
            self.fail("unexpected end of expression", tok)
        self.fail(f"unexpected {value!r}", tok)


def compile_expression(text: str):
    """Compile ``text`` into a vectorized function of x."""
    if not isinstance(text, str):
        raise TypeError("expression must be a string")
    return _Parser(text).parse()


def evaluate(text: str, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return np.asarray(compile_expression(text)(x), dtype=float) * np.ones_like(x)
