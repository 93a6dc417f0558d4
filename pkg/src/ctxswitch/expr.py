"""Datapath expressions: parsing, canonical rendering, and evaluation.

Values are unsigned 64-bit integers. Arithmetic wraps modulo 2**64,
comparisons yield 1 or 0, and shift amounts of 64 or more produce 0.
Division is deliberately not part of the language.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Callable, Mapping, Union

MASK64 = (1 << 64) - 1

# lowest to highest precedence, C-like
_LEVELS: tuple[tuple[str, ...], ...] = (
    ("|",),
    ("^",),
    ("&",),
    ("==", "!="),
    ("<", "<=", ">", ">="),
    ("<<", ">>"),
    ("+", "-"),
    ("*",),
)

_TOKEN = re.compile(
    r"\s*(?:(?P<num>0[xX][0-9a-fA-F]+|\d+)"
    r"|(?P<name>[A-Za-z_][A-Za-z0-9_]*)"
    r"|(?P<op><<|>>|==|!=|<=|>=|[-+*&|^<>()]))"
)


class ExprSyntaxError(ValueError):
    """Malformed expression; ``column`` is 1-based within the expression text."""

    def __init__(self, message: str, text: str, column: int):
        super().__init__(f"{message} at column {column} in {text!r}")
        self.text = text
        self.column = column


@dataclass(frozen=True)
class Const:
    value: int


@dataclass(frozen=True)
class Name:
    id: str


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"


Expr = Union[Const, Name, BinOp]


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    stripped_end = len(text.rstrip())
    while pos < stripped_end:
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            col = pos + 1 + (len(text[pos:]) - len(text[pos:].lstrip()))
            raise ExprSyntaxError("unexpected character", text, col)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind) + 1))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def fail(self, message: str):
        tok = self.peek()
        col = tok[2] if tok else len(self.text.rstrip()) + 1
        raise ExprSyntaxError(message, self.text, col)

    def parse(self) -> Expr:
        if not self.tokens:
            self.fail("empty expression")
        node = self.binary(0)
        if self.peek() is not None:
            self.fail("unexpected token")
        return node

    def binary(self, level: int) -> Expr:
        if level == len(_LEVELS):
            return self.atom()
        node = self.binary(level + 1)
        while True:
            tok = self.peek()
            if tok is None or tok[0] != "op" or tok[1] not in _LEVELS[level]:
                return node
            self.i += 1
            node = BinOp(tok[1], node, self.binary(level + 1))

    def atom(self) -> Expr:
        tok = self.peek()
        if tok is None:
            self.fail("unexpected end of expression")
        kind, value, _ = tok
        if kind == "num":
            self.i += 1
            n = int(value, 0)
            if n > MASK64:
                self.fail("literal exceeds 64 bits")
            return Const(n)
        if kind == "name":
            self.i += 1
            return Name(value)
        if value == "(":
            self.i += 1
            node = self.binary(0)
            tok = self.peek()
            if tok is None or tok[1] != ")":
                self.fail("expected ')'")
            self.i += 1
            return node
        self.fail("expected operand")


def parse_expr(text: str) -> Expr:
    return _Parser(text).parse()


def render(node: Expr) -> str:
    """Canonical text: no whitespace, every binary operation parenthesized."""
    if isinstance(node, Const):
        return str(node.value)
    if isinstance(node, Name):
        return node.id
    return f"({render(node.left)}{node.op}{render(node.right)})"


def names(node: Expr) -> set[str]:
    if isinstance(node, Name):
        return {node.id}
    if isinstance(node, BinOp):
        return names(node.left) | names(node.right)
    return set()


def _shl(a: int, b: int) -> int:
    return (a << b) & MASK64 if b < 64 else 0


def _shr(a: int, b: int) -> int:
    return a >> b if b < 64 else 0


_OPS: dict[str, Callable[[int, int], int]] = {
    "+": lambda a, b: (a + b) & MASK64,
    "-": lambda a, b: (a - b) & MASK64,
    "*": lambda a, b: (a * b) & MASK64,
    "&": lambda a, b: a & b,
    "|": lambda a, b: a | b,
    "^": lambda a, b: a ^ b,
    "<<": _shl,
    ">>": _shr,
    "==": lambda a, b: int(a == b),
    "!=": lambda a, b: int(a != b),
    "<": lambda a, b: int(a < b),
    "<=": lambda a, b: int(a <= b),
    ">": lambda a, b: int(a > b),
    ">=": lambda a, b: int(a >= b),
}


def evaluate(node: Expr, env: Mapping[str, int]) -> int:
    """Reference tree-walking evaluator."""
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Name):
        return env[node.id]
    return _OPS[node.op](evaluate(node.left, env), evaluate(node.right, env))


def compile_expr(node: Expr) -> Callable[[Mapping[str, int]], int]:
    """Turn an expression tree into a closure; same results as :func:`evaluate`."""
    if isinstance(node, Const):
        value = node.value
        return lambda env: value
    if isinstance(node, Name):
        key = node.id
        return lambda env: env[key]
    fn = _OPS[node.op]
    left = compile_expr(node.left)
    right = compile_expr(node.right)
    return lambda env: fn(left(env), right(env))
