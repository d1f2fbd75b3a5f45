"""A deliberately small arithmetic language for boundary data.

Grammar::

    expr  := term (("+" | "-") term)*
    term  := unary (("*" | "/") unary)*
    unary := ("-" | "+") unary | power
    power := atom ("^" unary)?            # right associative, binds tighter than unary minus
    atom  := NUMBER | NAME | FUNC "(" expr ")" | "(" expr ")"

Names are ``x``, ``y``, ``t`` and the constant ``pi``; functions are
``sin``, ``cos``, ``exp`` and ``log``. Parsed expressions evaluate
element-wise on numpy arrays and print back in a fully parenthesized
canonical form.
"""

from __future__ import annotations

import math
import re

import numpy as np

VARIABLES = ("x", "y", "t")
CONSTANTS = {"pi": math.pi}
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "log": np.log}

_TOKEN = re.compile(r"\s*(?:(\d+\.?\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)|([A-Za-z_]\w*)|(.))")


class ExprError(ValueError):
    pass


def _tokenize(text: str):
    pos = 0
    out = []
    text = text.rstrip()
    while pos < len(text):
        m = _TOKEN.match(text, pos)
        if m is None:  # pragma: no cover - the pattern matches any char
            raise ExprError(f"cannot tokenize at {pos}")
        num, name, op = m.groups()
        if num is not None:
            out.append(("num", float(num), m.start(1)))
        elif name is not None:
            out.append(("name", name, m.start(2)))
        elif op is not None:
            if op not in "+-*/^()":
                raise ExprError(f"unexpected character {op!r} at position {m.start(3)}")
            out.append(("op", op, m.start(3)))
        pos = m.end()
    out.append(("end", None, len(text)))
    return out


class _Parser:
    def __init__(self, text):
        self.toks = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.toks[self.i]

    def take(self, kind=None, value=None):
        tok = self.toks[self.i]
        if (kind and tok[0] != kind) or (value is not None and tok[1] != value):
            want = value if value is not None else kind
            got = "end of input" if tok[0] == "end" else repr(tok[1])
            raise ExprError(f"expected {want!r} but found {got} at position {tok[2]}")
        self.i += 1
        return tok

    def expr(self):
        node = self.term()
        while self.peek()[0] == "op" and self.peek()[1] in "+-":
            op = self.take()[1]
            node = ("bin", op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.peek()[0] == "op" and self.peek()[1] in "*/":
            op = self.take()[1]
            node = ("bin", op, node, self.unary())
        return node

    def unary(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in "+-":
            self.take()
            inner = self.unary()
            return inner if tok[1] == "+" else ("neg", inner)
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            return ("bin", "^", base, self.unary())
        return base

    def atom(self):
        tok = self.peek()
        if tok[0] == "num":
            self.take()
            return ("num", tok[1])
        if tok[0] == "name":
            self.take()
            name = tok[1]
            if name in FUNCTIONS:
                self.take("op", "(")
                arg = self.expr()
                self.take("op", ")")
                return ("call", name, arg)
            if name in VARIABLES:
                return ("var", name)
            if name in CONSTANTS:
                return ("const", name)
            raise ExprError(f"unknown name {name!r} at position {tok[2]}")
        if tok[0] == "op" and tok[1] == "(":
            self.take()
            node = self.expr()
            self.take("op", ")")
            return node
        got = "end of input" if tok[0] == "end" else repr(tok[1])
        raise ExprError(f"unexpected {got} at position {tok[2]}")


def _to_str(node) -> str:
    kind = node[0]
    if kind == "num":
        return repr(node[1])
    if kind in ("var", "const"):
        return node[1]
    if kind == "neg":
        return f"(-{_to_str(node[1])})"
    if kind == "call":
        return f"{node[1]}({_to_str(node[2])})"
    return f"({_to_str(node[2])} {node[1]} {_to_str(node[3])})"


def _eval(node, env):
    kind = node[0]
    if kind == "num":
        return node[1]
    if kind == "var":
        return env[node[1]]
    if kind == "const":
        return CONSTANTS[node[1]]
    if kind == "neg":
        return -_eval(node[1], env)
    if kind == "call":
        return FUNCTIONS[node[1]](_eval(node[2], env))
    a, b = _eval(node[2], env), _eval(node[3], env)
    op = node[1]
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return a / b
    return np.power(a, b)


class Expression:
    """A parsed expression, callable as ``f(x, y, t)`` on arrays."""

    def __init__(self, text: str):
        self.source = text
        p = _Parser(str(text))
        self.tree = p.expr()
        p.take("end")

    def __call__(self, x, y=0.0, t=0.0):
        x = np.asarray(x, dtype=float)
        with np.errstate(all="ignore"):
            out = _eval(self.tree, {"x": x, "y": np.asarray(y, dtype=float), "t": t})
        return np.broadcast_to(np.asarray(out, dtype=float), x.shape)

    def canonical(self) -> str:
        return _to_str(self.tree)

    def __repr__(self):
        return f"Expression({self.canonical()!r})"


def parse_expression(text: str) -> Expression:
    return Expression(text)
