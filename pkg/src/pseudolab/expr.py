"""Pratt parser and evaluator for complex potential expressions.

Grammar (standard precedence, ``^`` right-associative and binding tighter
than unary minus)::

    expr  := term (('+'|'-') term)*
    term  := unary (('*'|'/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?
    atom  := number | 'x' | 'i' | ident '(' expr ')' | '(' expr ')'

Evaluation is vectorised over numpy arrays of ``x`` and always returns
complex values.
"""
from __future__ import annotations

import re
from dataclasses import dataclass

import numpy as np

FUNCTIONS = {
    "exp": np.exp,
    "sin": np.sin,
    "cos": np.cos,
    "sqrt": np.sqrt,
    "abs": lambda z: np.abs(z).astype(complex),
    "re": lambda z: np.real(z).astype(complex),
    "im": lambda z: np.imag(z).astype(complex),
}

# binding powers
_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_UNARY_BP = 30


class ParseError(ValueError):
    """Syntax error at a character offset of the source text."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (at position {position})")
        self.position = position


class EvaluationError(ArithmeticError):
    pass


# --------------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float

    def eval(self, x):
        return np.full(np.shape(x), complex(self.value))

    def to_source(self) -> str:
        return repr(float(self.value))


@dataclass(frozen=True)
class Var:
    def eval(self, x):
        return np.asarray(x, dtype=complex)

    def to_source(self) -> str:
        return "x"


@dataclass(frozen=True)
class Imag:
    def eval(self, x):
        return np.full(np.shape(x), 1j)

    def to_source(self) -> str:
        return "i"


@dataclass(frozen=True)
class Neg:
    operand: object

    def eval(self, x):
        return -self.operand.eval(x)

    def to_source(self) -> str:
        inner = self.operand.to_source()
        if isinstance(self.operand, BinOp) and _BP[self.operand.op] < _BP["^"]:
            inner = f"({inner})"
        return f"-{inner}"


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object

    def eval(self, x):
        a = self.left.eval(x)
        b = self.right.eval(x)
        if self.op == "+":
            return a + b
        if self.op == "-":
            return a - b
        if self.op == "*":
            return a * b
        if self.op == "/":
            if np.any(b == 0):
                raise EvaluationError("division by zero")
            return a / b
        if self.op == "^":
            return _power(a, b)
        raise AssertionError(self.op)

    def to_source(self) -> str:
        bp = _BP[self.op]
        left = self.left.to_source()
        right = self.right.to_source()
        if self.op == "^":
            # right-associative: only the left side needs guarding
            if _needs_parens(self.left, bp, strict=False):
                left = f"({left})"
            if isinstance(self.right, BinOp) and _BP[self.right.op] < bp:
                right = f"({right})"
        else:
            if _needs_parens(self.left, bp, strict=True):
                left = f"({left})"
            if _needs_parens(self.right, bp, strict=False):
                right = f"({right})"
        return f"{left} {self.op} {right}" if bp < 40 else f"{left}^{right}"


@dataclass(frozen=True)
class Call:
    name: str
    arg: object

    def eval(self, x):
        return np.asarray(FUNCTIONS[self.name](self.arg.eval(x)), dtype=complex)

    def to_source(self) -> str:
        return f"{self.name}({self.arg.to_source()})"


def _needs_parens(node, bp: int, strict: bool) -> bool:
    if isinstance(node, Neg):
        return bp >= _UNARY_BP
    if not isinstance(node, BinOp):
        return False
    inner = _BP[node.op]
    return inner < bp if strict else inner <= bp


def _power(a, b):
    # integer exponents via repeated multiplication keep real inputs exact
    if np.all(b.imag == 0) and np.all(b.real == np.round(b.real)):
        n = b.real.astype(int)
        if np.all(n == n.flat[0]) and abs(int(n.flat[0])) <= 64:
            k = int(n.flat[0])
            if k < 0 and np.any(a == 0):
                raise EvaluationError("zero raised to a negative power")
            out = np.ones_like(a)
            for _ in range(abs(k)):
                out = out * a
            return out if k >= 0 else 1.0 / out
    if np.any((a == 0) & (b.real <= 0)):
        raise EvaluationError("zero raised to a non-positive power")
    with np.errstate(all="ignore"):
        return np.where(a == 0, 0j, np.power(a, b))


# ------------------------------------------------------------------ lexer

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<id>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "id", "op", "end"
    text: str
    pos: int


def tokenize(src: str) -> list[Token]:
    src = src.replace("−", "-")  # unicode minus
    tokens = []
    pos = 0
    while pos < len(src):
        if src[pos:].strip() == "":
            break
        m = _TOKEN.match(src, pos)
        if m is None:
            bad = pos + len(src[pos:]) - len(src[pos:].lstrip())
            raise ParseError(f"unexpected character {src[bad]!r}", bad)
        kind = m.lastgroup
        tokens.append(Token(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(Token("end", "", len(src)))
    return tokens


# ----------------------------------------------------------------- parser


class _Parser:
    def __init__(self, src: str):
        self.tokens = tokenize(src)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def advance(self) -> Token:
        t = self.tokens[self.i]
        self.i += 1
        return t

    def expect(self, text: str):
        if self.tok.text != text or self.tok.kind != "op":
            raise ParseError(f"expected {text!r}", self.tok.pos)
        self.advance()

    def lbp(self, t: Token) -> int:
        if t.kind == "op" and t.text in _BP:
            return _BP[t.text]
        return 0

    def expression(self, rbp: int = 0):
        t = self.advance()
        left = self.nud(t)
        while rbp < self.lbp(self.tok):
            t = self.advance()
            left = self.led(t, left)
        return left

    def nud(self, t: Token):
        if t.kind == "num":
            return Num(float(t.text))
        if t.kind == "id":
            if t.text == "x":
                return Var()
            if t.text == "i":
                return Imag()
            if t.text in FUNCTIONS:
                self.expect("(")
                arg = self.expression()
                self.expect(")")
                return Call(t.text, arg)
            raise ParseError(f"unknown identifier {t.text!r}", t.pos)
        if t.kind == "op" and t.text == "-":
            return Neg(self.expression(_UNARY_BP))
        if t.kind == "op" and t.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        if t.kind == "end":
            raise ParseError("unexpected end of input", t.pos)
        raise ParseError(f"unexpected token {t.text!r}", t.pos)

    def led(self, t: Token, left):
        bp = _BP[t.text]
        if t.text == "^":
            return BinOp("^", left, self.expression(bp - 1))
        return BinOp(t.text, left, self.expression(bp))


def parse(src: str):
    """Parse ``src`` into an expression tree."""
    p = _Parser(src)
    node = p.expression()
    if p.tok.kind != "end":
        raise ParseError(f"unexpected token {p.tok.text!r}", p.tok.pos)
    return node


def evaluate(node, x):
    """Evaluate an expression tree at ``x`` (scalar or array)."""
    with np.errstate(all="ignore"):
        out = node.eval(np.asarray(x, dtype=float))
    return out
