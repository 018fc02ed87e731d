"""A small expression language for scalar fields and map components.

Grammar (``^`` binds tighter than unary minus, which binds tighter than
``*`` and ``/``)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' ['-'] integer)?
    atom   := number | 'pi' | variable | func '(' expr ')' | '(' expr ')'
    func   := 'sin' | 'cos' | 'exp'

Variables are grid axis names (``x``, ``y``, ``t``, ``x1``, ``y1``, ...).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp}
VARIABLES = ("x", "y", "t", "x1", "y1", "x2", "y2")


class ParseError(ValueError):
    def __init__(self, offset: int, expected, found: str = ""):
        self.offset = offset
        self.expected = frozenset(expected)
        self.found = found
        exp = ", ".join(sorted(self.expected))
        what = f"found {found!r}" if found else "found end of input"
        super().__init__(f"at offset {offset}: expected one of {{{exp}}}, {what}")


class EvalError(ArithmeticError):
    pass


class UnknownVariable(EvalError):
    pass


class DivisionByZero(EvalError):
    pass


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Pi:
    pass


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


@dataclass(frozen=True)
class Call:
    func: str
    arg: object


_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")
_ATOM_START = {"number", "identifier", "(", "-"}


def _tokenize(src: str):
    toks = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            start = len(src) - len(src[pos:].lstrip())
            raise ParseError(_byte_offset(src, start), {"number", "identifier", "operator"},
                             src[start])
        kind = m.lastgroup
        toks.append((kind, m.group(kind), _byte_offset(src, m.start(kind))))
        pos = m.end()
    toks.append(("eof", "", _byte_offset(src, len(src))))
    return toks


def _byte_offset(src: str, i: int) -> int:
    return len(src[:i].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.toks[self.i]

    def error(self, expected):
        kind, text, off = self.tok
        raise ParseError(off, expected, text)

    def take(self, text):
        if self.tok[1] == text and self.tok[0] == "op":
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.take(text):
            self.error({text})

    def parse(self):
        node = self.expr()
        if self.tok[0] != "eof":
            self.error({"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.tok[0] == "op" and self.tok[1] in "+-":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok[0] == "op" and self.tok[1] in "*/":
            op = self.tok[1]
            self.i += 1
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.take("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.take("^"):
            neg = self.take("-")
            kind, text, _ = self.tok
            if kind != "num" or not text.isdigit():
                self.error({"integer"})
            self.i += 1
            exp = Num(float(text))
            base = BinOp("^", base, Neg(exp) if neg else exp)
        return base

    def atom(self):
        kind, text, _ = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(text))
        if kind == "id":
            self.i += 1
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            if text == "pi":
                return Pi()
            return Var(text)
        if self.take("("):
            node = self.expr()
            self.expect(")")
            return node
        self.error(_ATOM_START)


def parse(src: str):
    """Parse an expression string into an AST."""
    return _Parser(src).parse()


def _fmt_num(v: float) -> str:
    return repr(float(v)) if v != int(v) or abs(v) >= 1e16 else str(int(v))


def to_string(node) -> str:
    """Fully parenthesized source text that parses back to the same AST."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Pi):
        return "pi"
    if isinstance(node, Neg):
        return f"(-{to_string(node.arg)})"
    if isinstance(node, Call):
        return f"{node.func}({to_string(node.arg)})"
    if node.op == "^":
        exp = node.right
        txt = f"-{_fmt_num(exp.arg.value)}" if isinstance(exp, Neg) else _fmt_num(exp.value)
        return f"({to_string(node.left)}^{txt})"
    return f"({to_string(node.left)} {node.op} {to_string(node.right)})"


def variables(node) -> set[str]:
    if isinstance(node, Var):
        return {node.name}
    if isinstance(node, (Neg, Call)):
        return variables(node.arg)
    if isinstance(node, BinOp):
        return variables(node.left) | variables(node.right)
    return set()


def evaluate(node, env: dict):
    """Evaluate against ``env`` mapping variable names to arrays or scalars."""
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Pi):
        return math.pi
    if isinstance(node, Var):
        if node.name not in env:
            raise UnknownVariable(f"unknown variable {node.name!r}")
        return env[node.name]
    if isinstance(node, Neg):
        return -evaluate(node.arg, env)
    if isinstance(node, Call):
        return FUNCTIONS[node.func](evaluate(node.arg, env))
    a = evaluate(node.left, env)
    b = evaluate(node.right, env)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        if np.any(np.asarray(b) == 0):
            raise DivisionByZero("division by zero")
        return a / b
    k = int(b)
    if k < 0 and np.any(np.asarray(a) == 0):
        raise DivisionByZero("negative power of zero")
    return a ** k if k >= 0 else 1.0 / a ** (-k)


def eval_on_grid(node, spec) -> np.ndarray:
    """Sample an expression on every grid point."""
    if isinstance(node, str):
        node = parse(node)
    with np.errstate(over="ignore", invalid="ignore"):
        val = evaluate(node, spec.coords())
    out = np.broadcast_to(np.asarray(val, dtype=float), spec.dims).copy()
    if not np.all(np.isfinite(out)):
        raise EvalError("expression produced non-finite values")
    return out
