"""Growth-rate expressions m(x): tokenizer, recursive-descent parser, evaluator.

Grammar (whitespace insignificant)::

    expr   := term (('+' | '-') term)*
    term   := factor (('*' | '/') factor)*
    factor := '-' factor | base ('^' factor)?
    base   := number | 'x' | 'pi' | func '(' expr ')' | '(' expr ')'
    func   := 'sin' | 'cos' | 'exp' | 'abs'

``^`` is right-associative and binds tighter than unary minus, so ``-x^2``
means ``-(x^2)``.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import EvaluationError, ExprSyntaxError, UnknownIdentifier
from .grid import Grid1D, integrate

FUNCTIONS = {
    "sin": np.sin,
    "cos": np.cos,
    "exp": np.exp,
    "abs": np.abs,
}
CONSTANTS = {"pi": math.pi}


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Node"


@dataclass(frozen=True)
class Bin:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    fn: str
    arg: "Node"


Node = Union[Num, Var, Neg, Bin, Call]

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


def _tokenize(src: str):
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            pos = len(src)
            break
        mt = _TOKEN.match(src, pos)
        if mt is None:
            start = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ExprSyntaxError(f"unexpected character {src[start]!r}", _byte_offset(src, start))
        kind = mt.lastgroup
        tokens.append((kind, mt.group(kind), mt.start(kind)))
        pos = mt.end()
    tokens.append(("eof", "", len(src)))
    return tokens


def _byte_offset(src: str, idx: int) -> int:
    return len(src[:idx].encode("utf-8"))


class _Parser:
    def __init__(self, src: str):
        self.src = src
        self.tokens = _tokenize(src)
        self.i = 0

    @property
    def tok(self):
        return self.tokens[self.i]

    def error(self, message):
        kind, text, pos = self.tok
        if kind == "eof":
            message = f"{message}: unexpected end of input"
        else:
            message = f"{message}: unexpected {text!r}"
        return ExprSyntaxError(message, _byte_offset(self.src, pos))

    def accept(self, *ops):
        kind, text, _ = self.tok
        if kind == "op" and text in ops:
            self.i += 1
            return text
        return None

    def expect(self, op):
        if self.accept(op) is None:
            raise self.error(f"expected {op!r}")

    def parse(self) -> Node:
        node = self.expr()
        if self.tok[0] != "eof":
            raise self.error("trailing input")
        return node

    def expr(self) -> Node:
        node = self.term()
        while (op := self.accept("+", "-")) is not None:
            node = Bin(op, node, self.term())
        return node

    def term(self) -> Node:
        node = self.factor()
        while (op := self.accept("*", "/")) is not None:
            node = Bin(op, node, self.factor())
        return node

    def factor(self) -> Node:
        if self.accept("-") is not None:
            return Neg(self.factor())
        node = self.base()
        if self.accept("^") is not None:
            node = Bin("^", node, self.factor())
        return node

    def base(self) -> Node:
        kind, text, pos = self.tok
        if kind == "num":
            self.i += 1
            return Num(float(text))
        if kind == "name":
            self.i += 1
            if text == "x":
                return Var()
            if text in CONSTANTS:
                return Num(CONSTANTS[text])
            if text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(text, arg)
            raise UnknownIdentifier(text, _byte_offset(self.src, pos))
        if self.accept("(") is not None:
            node = self.expr()
            self.expect(")")
            return node
        raise self.error("expected a number, 'x', a function call or '('")


def parse(src: str) -> Node:
    if not isinstance(src, str) or not src.strip():
        raise ExprSyntaxError("empty expression", 0)
    return _Parser(src).parse()


def evaluate(node: Node, x):
    """Evaluate ``node`` at ``x`` (scalar or array), elementwise."""
    x = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        return np.broadcast_to(_eval(node, x), x.shape).astype(float)


def _eval(node, x):
    if isinstance(node, Num):
        return np.float64(node.value)
    if isinstance(node, Var):
        return x
    if isinstance(node, Neg):
        return -_eval(node.arg, x)
    if isinstance(node, Call):
        return FUNCTIONS[node.fn](_eval(node.arg, x))
    a = _eval(node.left, x)
    b = _eval(node.right, x)
    if node.op == "+":
        return a + b
    if node.op == "-":
        return a - b
    if node.op == "*":
        return a * b
    if node.op == "/":
        return a / b
    return np.power(a, b)


def to_source(node: Node) -> str:
    """Render ``node`` as text that parses back to an equivalent tree."""
    if isinstance(node, Num):
        text = repr(float(node.value))
        return f"({text})" if node.value < 0 else text
    if isinstance(node, Var):
        return "x"
    if isinstance(node, Neg):
        return f"(-{to_source(node.arg)})"
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    return f"({to_source(node.left)} {node.op} {to_source(node.right)})"


CASE_A1 = "A1"
CASE_A2 = "A2"
CASE_A2_CONSTANT = "A2-constant"
CASE_NEITHER = "neither"

_SIGN_TOL = 1e-12


@dataclass(frozen=True)
class GrowthProfile:
    source: str
    ast: Node
    samples: np.ndarray
    integral: float
    mean: float
    maxval: float
    case: str

    @property
    def is_constant(self) -> bool:
        return self.case == CASE_A2_CONSTANT or bool(np.ptp(self.samples) == 0.0)


def classify(integral: float, maxval: float, constant: bool) -> str:
    if constant:
        return CASE_A2_CONSTANT if integral >= -_SIGN_TOL else CASE_NEITHER
    if integral < -_SIGN_TOL:
        return CASE_A1 if maxval > 0 else CASE_NEITHER
    return CASE_A2


def sample_profile(ast: Node | str, g: Grid1D) -> GrowthProfile:
    if isinstance(ast, str):
        source, ast = ast, parse(ast)
    else:
        source = to_source(ast)
    m = evaluate(ast, g.x)
    bad = ~np.isfinite(m)
    if bad.any():
        i = int(np.argmax(bad))
        raise EvaluationError(f"m(x) is not finite at x={g.x[i]:.6g} (node {i})")
    m = m.copy()
    m.flags.writeable = False
    integral = integrate(g, m)
    scale = max(1.0, float(np.max(np.abs(m))))
    constant = bool(np.ptp(m) <= 1e-12 * scale)
    return GrowthProfile(
        source=source,
        ast=ast,
        samples=m,
        integral=integral,
        mean=integral / g.L,
        maxval=float(np.max(m)),
        case=classify(integral, float(np.max(m)), constant),
    )
