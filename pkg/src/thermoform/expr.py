"""One-variable closed-form expressions: parsing, evaluation, differentiation.

Grammar (standard precedence, ``^`` right-associative)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | 'x' | 'sqrt' '(' expr ')' | '(' expr ')'

Constants are kept as exact :class:`fractions.Fraction` values while the tree is
built, so ``17/60`` folds to an exact rational before it is ever rounded.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from typing import Union

import numpy as np

__all__ = [
    "Expr", "Const", "Var", "Neg", "BinOp", "Sqrt",
    "ExprSyntaxError", "ExprDomainError",
    "parse", "evaluate", "evaluate_exact", "differentiate", "to_string",
]


class ExprSyntaxError(ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class ExprDomainError(ArithmeticError):
    def __init__(self, message: str, node: "Expr"):
        super().__init__(f"{message} in '{to_string(node)}'")
        self.node = node


@dataclass(frozen=True)
class Const:
    value: Fraction


@dataclass(frozen=True)
class Var:
    pass


@dataclass(frozen=True)
class Neg:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # one of + - * / ^
    left: "Expr"
    right: "Expr"


@dataclass(frozen=True)
class Sqrt:
    arg: "Expr"


Expr = Union[Const, Var, Neg, BinOp, Sqrt]

ZERO = Const(Fraction(0))
ONE = Const(Fraction(1))
X = Var()


# ---------------------------------------------------------------------------
# constructors with constant folding

def _const(v) -> Const:
    return Const(v if isinstance(v, Fraction) else Fraction(v))


def neg(a: Expr) -> Expr:
    if isinstance(a, Const):
        return _const(-a.value)
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def binop(op: str, a: Expr, b: Expr) -> Expr:
    if isinstance(a, Const) and isinstance(b, Const):
        folded = _fold(op, a.value, b.value)
        if folded is not None:
            return _const(folded)
    if op == "+":
        if a == ZERO:
            return b
        if b == ZERO:
            return a
    elif op == "-":
        if b == ZERO:
            return a
        if a == ZERO:
            return neg(b)
    elif op == "*":
        if a == ZERO or b == ZERO:
            return ZERO
        if a == ONE:
            return b
        if b == ONE:
            return a
    elif op == "/":
        if b == ONE:
            return a
        if a == ZERO and b != ZERO:
            return ZERO
    elif op == "^":
        if b == ONE:
            return a
        if b == ZERO:
            return ONE
    return BinOp(op, a, b)


def _fold(op: str, a: Fraction, b: Fraction):
    if op == "+":
        return a + b
    if op == "-":
        return a - b
    if op == "*":
        return a * b
    if op == "/":
        return None if b == 0 else a / b
    # ^ : exact only for integer exponents with a well-defined result
    if b.denominator == 1 and not (a == 0 and b < 0) and abs(b) <= 64:
        return a ** int(b)
    return None


def sqrt(a: Expr) -> Expr:
    if isinstance(a, Const) and a.value >= 0:
        num, den = a.value.numerator, a.value.denominator
        rn, rd = _isqrt_exact(num), _isqrt_exact(den)
        if rn is not None and rd is not None:
            return _const(Fraction(rn, rd))
    return Sqrt(a)


def _isqrt_exact(n: int):
    import math
    r = math.isqrt(n)
    return r if r * r == n else None


# ---------------------------------------------------------------------------
# parsing

_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+(?:\.\d*)?(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)


def _tokenize(text: str):
    tokens = []
    pos = 0
    raw = text.encode("utf-8")
    # offsets are reported in bytes; map char index -> byte index lazily
    def byte_offset(i: int) -> int:
        return len(text[:i].encode("utf-8"))

    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if m is None or m.end() == pos:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", byte_offset(pos))
        start = m.start(m.lastgroup)
        kind = m.lastgroup
        value = m.group(kind)
        if kind == "name" and value not in ("x", "sqrt"):
            raise ExprSyntaxError(f"unknown identifier {value!r}", byte_offset(start))
        tokens.append((kind, value, byte_offset(start)))
        pos = m.end()
    tokens.append(("end", "", len(raw)))
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
        kind, val, off = self.take()
        if val != value or kind == "end":
            found = "end of input" if kind == "end" else repr(val)
            raise ExprSyntaxError(f"expected {value!r}, found {found}", off)

    def parse(self) -> Expr:
        e = self.expr()
        kind, val, off = self.peek()
        if kind != "end":
            raise ExprSyntaxError(f"unexpected token {val!r}", off)
        return e

    def expr(self) -> Expr:
        e = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            e = binop(op, e, self.term())
        return e

    def term(self) -> Expr:
        e = self.unary()
        while self.peek()[1] in ("*", "/") and self.peek()[0] == "op":
            op = self.take()[1]
            e = binop(op, e, self.unary())
        return e

    def unary(self) -> Expr:
        if self.peek()[:2] == ("op", "-"):
            self.take()
            return neg(self.unary())
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek()[:2] == ("op", "^"):
            self.take()
            return binop("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, val, off = self.take()
        if kind == "num":
            return _const(Fraction(val))
        if kind == "name":
            if val == "x":
                return X
            self.expect("(")
            inner = self.expr()
            self.expect(")")
            return sqrt(inner)
        if (kind, val) == ("op", "("):
            inner = self.expr()
            self.expect(")")
            return inner
        found = "end of input" if kind == "end" else repr(val)
        raise ExprSyntaxError(f"unexpected {found}", off)


def parse(text: str) -> Expr:
    """Parse ``text`` into an expression tree.

    Raises
    ------
    ExprSyntaxError
        On malformed input or identifiers other than ``x`` and ``sqrt``.
    """
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    return _Parser(text).parse()


# ---------------------------------------------------------------------------
# evaluation

def _eval(e: Expr, x, strict: bool):
    if isinstance(e, Const):
        return float(e.value)
    if isinstance(e, Var):
        return x
    if isinstance(e, Neg):
        return -_eval(e.arg, x, strict)
    if isinstance(e, Sqrt):
        a = _eval(e.arg, x, strict)
        if strict and np.any(np.asarray(a) < 0):
            raise ExprDomainError("square root of a negative number", e)
        return np.sqrt(a)
    a = _eval(e.left, x, strict)
    b = _eval(e.right, x, strict)
    if e.op == "+":
        return a + b
    if e.op == "-":
        return a - b
    if e.op == "*":
        return a * b
    if e.op == "/":
        if strict and np.any(np.asarray(b) == 0):
            raise ExprDomainError("division by zero", e)
        return np.true_divide(a, b)
    # "^"
    if strict:
        aa, bb = np.broadcast_arrays(np.asarray(a, float), np.asarray(b, float))
        bad = (aa < 0) & (bb != np.round(bb))
        if np.any(bad):
            raise ExprDomainError("negative base with non-integer exponent", e)
        if np.any((aa == 0) & (bb < 0)):
            raise ExprDomainError("division by zero", e)
    return np.power(a, b)


def evaluate(e: Expr, x, strict: bool = True):
    """Evaluate ``e`` at ``x`` (a float or numpy array).

    With ``strict`` (the default) a negative radicand or zero divisor raises
    :class:`ExprDomainError`. With ``strict=False`` IEEE semantics apply and the
    caller gets ``inf``/``nan`` back, which the map layer uses for one-sided
    limits at singular endpoints.
    """
    scalar = np.ndim(x) == 0
    xa = np.asarray(x, dtype=float)
    with np.errstate(all="ignore"):
        out = _eval(e, xa, strict)
        out = np.broadcast_to(np.asarray(out, dtype=float), xa.shape)
        if strict and not np.all(np.isfinite(out)):
            raise ExprDomainError("non-finite value", e)
    return float(out) if scalar else np.array(out)


# ---------------------------------------------------------------------------
# differentiation

def differentiate(e: Expr) -> Expr:
    """Symbolic d/dx. Only constant folding is applied to the result."""
    if isinstance(e, Const):
        return ZERO
    if isinstance(e, Var):
        return ONE
    if isinstance(e, Neg):
        return neg(differentiate(e.arg))
    if isinstance(e, Sqrt):
        # (sqrt u)' = u' / (2 sqrt u)
        return binop("/", differentiate(e.arg), binop("*", _const(2), e))
    a, b = e.left, e.right
    da, db = differentiate(a), differentiate(b)
    if e.op in "+-":
        return binop(e.op, da, db)
    if e.op == "*":
        return binop("+", binop("*", da, b), binop("*", a, db))
    if e.op == "/":
        num = binop("-", binop("*", da, b), binop("*", a, db))
        return binop("/", num, binop("^", b, _const(2)))
    # "^"
    if isinstance(b, Const):
        return binop("*", binop("*", b, binop("^", a, _const(b.value - 1))), da)
    # general u^v = exp(v ln u) is outside the supported function set unless
    # the exponent is constant
    raise ValueError("only constant exponents can be differentiated")


# ---------------------------------------------------------------------------
# printing

def _const_str(v: Fraction) -> str:
    if v.denominator == 1:
        s = str(v.numerator)
    else:
        s = f"{v.numerator}/{v.denominator}"
    return f"({s})" if v < 0 or v.denominator != 1 else s


def to_string(e: Expr) -> str:
    """Fully parenthesised text form; ``parse(to_string(e))`` evaluates identically."""
    if isinstance(e, Const):
        return _const_str(e.value)
    if isinstance(e, Var):
        return "x"
    if isinstance(e, Neg):
        return f"(-{to_string(e.arg)})"
    if isinstance(e, Sqrt):
        return f"sqrt({to_string(e.arg)})"
    return f"({to_string(e.left)} {e.op} {to_string(e.right)})"


def evaluate_exact(e: Expr, x: Fraction):
    """Exact rational value of ``e`` at rational ``x``, or ``None`` if irrational/undefined."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        return Fraction(x)
    if isinstance(e, Neg):
        v = evaluate_exact(e.arg, x)
        return None if v is None else -v
    if isinstance(e, Sqrt):
        v = evaluate_exact(e.arg, x)
        if v is None or v < 0:
            return None
        out = sqrt(_const(v))
        return out.value if isinstance(out, Const) else None
    a = evaluate_exact(e.left, x)
    b = evaluate_exact(e.right, x)
    if a is None or b is None:
        return None
    return _fold(e.op, a, b)
