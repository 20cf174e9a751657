"""A small expression language for metric and map components.

Grammar (lowest to highest precedence)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?          # right associative, tighter than unary minus
    atom   := NUMBER | 'pi' | VAR | FUNC '(' expr ')' | '(' expr ')'

Variables are ``x1``, ``x2``, ``x3``; functions are sin, cos, exp, log, sqrt.
So ``-2^2`` is -4 and ``2^3^2`` is 512.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = ("sin", "cos", "exp", "log", "sqrt")
VARIABLES = ("x1", "x2", "x3")
PERIOD_TOL = 1e-9


class ExpressionError(ValueError):
    """Syntax or evaluation error. ``offset`` is a byte offset into the source."""

    def __init__(self, message, offset=None, expected=()):
        where = f" at offset {offset}" if offset is not None else ""
        exp = f" (expected {', '.join(repr(e) for e in sorted(expected))})" if expected else ""
        super().__init__(f"{message}{where}{exp}")
        self.offset = offset
        self.expected = frozenset(expected)


# ----------------------------------------------------------------------------
# tree

class Node:
    def evaluate(self, env):
        raise NotImplementedError

    def diff(self, var):
        raise NotImplementedError

    def variables(self):
        return set()

    def __call__(self, *coords):
        return self.evaluate({VARIABLES[i]: np.asarray(c, dtype=float) for i, c in enumerate(coords)})


@dataclass(frozen=True)
class Num(Node):
    value: float

    def evaluate(self, env):
        return np.float64(self.value)

    def diff(self, var):
        return Num(0.0)

    def __str__(self):
        return repr(self.value) if self.value >= 0 else f"({self.value!r})"


@dataclass(frozen=True)
class Var(Node):
    name: str

    def evaluate(self, env):
        try:
            return env[self.name]
        except KeyError:
            raise ExpressionError(f"variable {self.name} is not bound") from None

    def diff(self, var):
        return Num(1.0 if var == self.name else 0.0)

    def variables(self):
        return {self.name}

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class Neg(Node):
    arg: Node

    def evaluate(self, env):
        return -self.arg.evaluate(env)

    def diff(self, var):
        return neg(self.arg.diff(var))

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"(-{self.arg})"


@dataclass(frozen=True)
class Bin(Node):
    op: str
    left: Node
    right: Node

    def evaluate(self, env):
        a = self.left.evaluate(env)
        b = self.right.evaluate(env)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(np.asarray(b) == 0):
                raise ExpressionError("division by zero")
            return a / b
        with np.errstate(all="raise"):
            try:
                out = np.power(a, b)
            except FloatingPointError:
                raise ExpressionError("power undefined for these arguments") from None
        if not np.all(np.isfinite(out)):
            raise ExpressionError("power undefined for these arguments")
        return out

    def diff(self, var):
        a, b = self.left, self.right
        da, db = a.diff(var), b.diff(var)
        if self.op in "+-":
            return add(da, db) if self.op == "+" else sub(da, db)
        if self.op == "*":
            return add(mul(da, b), mul(a, db))
        if self.op == "/":
            return div(sub(mul(da, b), mul(a, db)), mul(b, b))
        if isinstance(db, Num) and db.value == 0.0:
            return mul(mul(b, power(a, sub(b, Num(1.0)))), da)
        # d(a^b) = a^b (b' log a + b a'/a)
        return mul(self, add(mul(db, Call("log", a)), div(mul(b, da), a)))

    def variables(self):
        return self.left.variables() | self.right.variables()

    def __str__(self):
        return f"({self.left} {self.op} {self.right})"


@dataclass(frozen=True)
class Call(Node):
    fn: str
    arg: Node

    def evaluate(self, env):
        x = self.arg.evaluate(env)
        if self.fn in ("log", "sqrt"):
            bad = np.asarray(x <= 0) if self.fn == "log" else np.asarray(x < 0)
            if np.any(bad):
                raise ExpressionError(f"{self.fn} of a non-positive argument")
        return getattr(np, self.fn)(x)

    def diff(self, var):
        x = self.arg
        dx = x.diff(var)
        if isinstance(dx, Num) and dx.value == 0.0:
            return Num(0.0)
        outer = {
            "sin": lambda: Call("cos", x),
            "cos": lambda: neg(Call("sin", x)),
            "exp": lambda: self,
            "log": lambda: div(Num(1.0), x),
            "sqrt": lambda: div(Num(0.5), self),
        }[self.fn]()
        return mul(outer, dx)

    def variables(self):
        return self.arg.variables()

    def __str__(self):
        return f"{self.fn}({self.arg})"


# light constant folding keeps derivative trees small
def _num(n):
    return isinstance(n, Num)


def add(a, b):
    if _num(a) and _num(b):
        return Num(a.value + b.value)
    if _num(a) and a.value == 0:
        return b
    if _num(b) and b.value == 0:
        return a
    return Bin("+", a, b)


def sub(a, b):
    if _num(a) and _num(b):
        return Num(a.value - b.value)
    if _num(b) and b.value == 0:
        return a
    if _num(a) and a.value == 0:
        return neg(b)
    return Bin("-", a, b)


def mul(a, b):
    if _num(a) and _num(b):
        return Num(a.value * b.value)
    if (_num(a) and a.value == 0) or (_num(b) and b.value == 0):
        return Num(0.0)
    if _num(a) and a.value == 1:
        return b
    if _num(b) and b.value == 1:
        return a
    return Bin("*", a, b)


def div(a, b):
    if _num(a) and a.value == 0:
        return Num(0.0)
    if _num(b) and b.value == 1:
        return a
    return Bin("/", a, b)


def power(a, b):
    if _num(b) and b.value == 1:
        return a
    if _num(b) and b.value == 0:
        return Num(1.0)
    return Bin("^", a, b)


def neg(a):
    if _num(a):
        return Num(-a.value)
    return Neg(a)


# ----------------------------------------------------------------------------
# parser

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int


def tokenize(text):
    tokens = []
    pos = 0
    while True:
        while pos < len(text) and text[pos].isspace():
            pos += 1
        if pos >= len(text):
            break
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise ExpressionError(f"unexpected character {text[pos]!r}", _byte_offset(text, pos))
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append(Token(kind, m.group(kind), start))
        pos = m.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


def _byte_offset(text, pos):
    return len(text[:pos].encode("utf-8"))


_ATOM_START = {"number", "identifier", "(", "-"}


class _Parser:
    def __init__(self, text):
        self.text = text
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def fail(self, message, expected=()):
        raise ExpressionError(message, _byte_offset(self.text, self.tok.offset), expected)

    def accept(self, text):
        if self.tok.kind == "op" and self.tok.text == text:
            self.i += 1
            return True
        return False

    def expect(self, text):
        if not self.accept(text):
            found = "end of input" if self.tok.kind == "end" else repr(self.tok.text)
            self.fail(f"unexpected {found}", {text})

    def parse(self):
        node = self.expr()
        if self.tok.kind != "end":
            self.fail(f"unexpected {self.tok.text!r}", {"+", "-", "*", "/", "^", "end of input"})
        return node

    def expr(self):
        node = self.term()
        while self.tok.kind == "op" and self.tok.text in "+-":
            op = self.tok.text
            self.i += 1
            node = Bin(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.tok.kind == "op" and self.tok.text in "*/":
            op = self.tok.text
            self.i += 1
            node = Bin(op, node, self.unary())
        return node

    def unary(self):
        if self.accept("-"):
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.accept("^"):
            return Bin("^", base, self.unary())
        return base

    def atom(self):
        tok = self.tok
        if tok.kind == "num":
            self.i += 1
            return Num(float(tok.text))
        if tok.kind == "name":
            self.i += 1
            if tok.text == "pi":
                return Num(float(np.pi))
            if tok.text in VARIABLES:
                return Var(tok.text)
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            self.i -= 1
            self.fail(f"unknown identifier {tok.text!r}", set(VARIABLES) | set(FUNCTIONS) | {"pi"})
        if self.accept("("):
            node = self.expr()
            self.expect(")")
            return node
        found = "end of input" if tok.kind == "end" else repr(tok.text)
        self.fail(f"unexpected {found}", _ATOM_START)


def parse_expression(text: str) -> Node:
    if not isinstance(text, str):
        raise ExpressionError(f"expression must be a string, got {type(text).__name__}")
    return _Parser(text).parse()


def as_expression(value) -> Node:
    """Accept an expression string or a bare number."""
    if isinstance(value, Node):
        return value
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        return Num(float(value))
    return parse_expression(value)


def evaluate(node: Node, coords):
    """Evaluate on coordinate arrays ``coords[a]``; result broadcast to their shape."""
    coords = np.asarray(coords, dtype=float)
    env = {VARIABLES[a]: coords[a] for a in range(coords.shape[0])}
    return np.broadcast_to(node.evaluate(env), coords.shape[1:]).astype(float)


def check_periodic(node: Node, dim, tol=PERIOD_TOL, samples=5):
    """Compare node(x) and node(x + 2 pi e_a) on a samples^dim probe lattice.

    Returns the worst absolute defect; raises ExpressionError above ``tol``
    (scaled by max(1, |value|)).
    """
    unknown = node.variables() - set(VARIABLES[:dim])
    if unknown:
        raise ExpressionError(f"variables {sorted(unknown)} not available in dimension {dim}")
    ticks = 2 * np.pi * (np.arange(samples) + 0.31) / samples
    pts = np.array(list(itertools.product(ticks, repeat=dim))).T
    base = evaluate(node, pts)
    worst = 0.0
    for a in range(dim):
        shifted = pts.copy()
        shifted[a] += 2 * np.pi
        defect = np.abs(evaluate(node, shifted) - base) / np.maximum(1.0, np.abs(base))
        worst = max(worst, float(defect.max()))
        if worst > tol:
            raise ExpressionError(f"expression {node} is not 2pi-periodic in {VARIABLES[a]} "
                                  f"(defect {worst:.3e})")
    return worst
