"""
Expression Trees for Holomorphic Maps

Immutable expression trees over the variables z1..zn with arithmetic, exp and
integer powers. Evaluation is vectorized with numpy over point batches of shape
(n, M); a log-modulus evaluator keeps doubly exponential values such as
exp(exp(z)) representable. Includes symbolic shift and differentiation, a text
parser, and the MeromorphicMap pair f = f1 / f0.
"""

import cmath
import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import (
    DimensionError,
    DivisionByZeroError,
    ExprOverflowError,
    ExprParseError,
    IndeterminatePhaseError,
    InputError,
)

logger = logging.getLogger(__name__)

Number = Union[int, float, complex]
Target = Optional[complex]  # None stands for the value infinity


class NodeKind(str, Enum):
    VAR = "var"
    CONST = "const"
    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    NEG = "neg"
    EXP = "exp"
    INTPOW = "intpow"


@dataclass(frozen=True, eq=False)
class Expr:
    """A node of an expression tree. Build with the module constructors."""

    kind: NodeKind
    children: Tuple["Expr", ...] = ()
    index: int = 0
    value: complex = 0j
    exponent: int = 0

    @cached_property
    def key(self) -> str:
        return to_text(self)

    @cached_property
    def dimension(self) -> int:
        """Largest variable index occurring in the tree (0 for constants)."""
        if self.kind is NodeKind.VAR:
            return self.index
        return max((child.dimension for child in self.children), default=0)

    @cached_property
    def holomorphic_safe(self) -> bool:
        if self.kind is NodeKind.DIV:
            return False
        if self.kind is NodeKind.INTPOW and self.exponent < 0:
            return False
        return all(child.holomorphic_safe for child in self.children)

    @property
    def is_const(self) -> bool:
        return self.kind is NodeKind.CONST

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Expr) and self.key == other.key

    def __hash__(self) -> int:
        return hash(self.key)

    def __str__(self) -> str:
        return self.key

    def __repr__(self) -> str:
        return f"Expr({self.key})"

    def __add__(self, other: Union["Expr", Number]) -> "Expr":
        return add(self, _coerce(other))

    def __radd__(self, other: Number) -> "Expr":
        return add(_coerce(other), self)

    def __sub__(self, other: Union["Expr", Number]) -> "Expr":
        return sub(self, _coerce(other))

    def __rsub__(self, other: Number) -> "Expr":
        return sub(_coerce(other), self)

    def __mul__(self, other: Union["Expr", Number]) -> "Expr":
        return mul(self, _coerce(other))

    def __rmul__(self, other: Number) -> "Expr":
        return mul(_coerce(other), self)

    def __truediv__(self, other: Union["Expr", Number]) -> "Expr":
        return div(self, _coerce(other))

    def __rtruediv__(self, other: Number) -> "Expr":
        return div(_coerce(other), self)

    def __neg__(self) -> "Expr":
        return neg(self)

    def __pow__(self, k: int) -> "Expr":
        if not isinstance(k, int):
            raise InputError(f"Only integer powers are supported, got {k!r}")
        return power(self, k)


@dataclass(frozen=True)
class LogMag:
    """Natural log of the modulus plus the phase wrapped to (-pi, pi]."""

    log_abs: float
    phase: float


# ---------------------------------------------------------------------------
# Constructors (with light constant folding)
# ---------------------------------------------------------------------------


def _coerce(x: Union[Expr, Number]) -> Expr:
    return x if isinstance(x, Expr) else const(x)


def _is_value(e: Expr, v: complex) -> bool:
    return e.kind is NodeKind.CONST and e.value == v


def var(index: int) -> Expr:
    if index < 1:
        raise DimensionError(f"Variable index must be >= 1, got {index}")
    return Expr(NodeKind.VAR, index=index)


def const(v: Number) -> Expr:
    return Expr(NodeKind.CONST, value=complex(v))


def add(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value + b.value)
    if _is_value(a, 0):
        return b
    if _is_value(b, 0):
        return a
    return Expr(NodeKind.ADD, (a, b))


def sub(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value - b.value)
    if _is_value(b, 0):
        return a
    if _is_value(a, 0):
        return neg(b)
    return Expr(NodeKind.SUB, (a, b))


def mul(a: Expr, b: Expr) -> Expr:
    if a.is_const and b.is_const:
        return const(a.value * b.value)
    if _is_value(a, 0) or _is_value(b, 0):
        return const(0)
    if _is_value(a, 1):
        return b
    if _is_value(b, 1):
        return a
    return Expr(NodeKind.MUL, (a, b))


def div(a: Expr, b: Expr) -> Expr:
    if _is_value(b, 0):
        raise DivisionByZeroError("Division by the constant 0")
    if b.is_const:
        return mul(a, const(1 / b.value))
    if _is_value(a, 0):
        return const(0)
    return Expr(NodeKind.DIV, (a, b))


def neg(a: Expr) -> Expr:
    if a.is_const:
        return const(-a.value)
    if a.kind is NodeKind.NEG:
        return a.children[0]
    return Expr(NodeKind.NEG, (a,))


def exp(a: Expr) -> Expr:
    if a.is_const:
        return const(cmath.exp(a.value))
    return Expr(NodeKind.EXP, (a,))


def power(a: Expr, k: int) -> Expr:
    if k == 0:
        return const(1)
    if k == 1:
        return a
    if a.is_const:
        if a.value == 0 and k < 0:
            raise DivisionByZeroError("Negative power of the constant 0")
        return const(a.value**k)
    return Expr(NodeKind.INTPOW, (a,), exponent=k)


def to_text(e: Expr) -> str:
    """Fully parenthesized text that parses back to an equivalent tree."""
    kind = e.kind
    if kind is NodeKind.VAR:
        return f"z{e.index}"
    if kind is NodeKind.CONST:
        v = e.value
        sign = "-" if v.imag < 0 else "+"
        return f"({v.real!r}{sign}{abs(v.imag)!r}i)"
    if kind is NodeKind.NEG:
        return f"(-{to_text(e.children[0])})"
    if kind is NodeKind.EXP:
        return f"exp({to_text(e.children[0])})"
    if kind is NodeKind.INTPOW:
        return f"({to_text(e.children[0])} ^ {e.exponent})"
    symbol = {NodeKind.ADD: "+", NodeKind.SUB: "-", NodeKind.MUL: "*", NodeKind.DIV: "/"}[kind]
    left, right = e.children
    return f"({to_text(left)} {symbol} {to_text(right)})"


# ---------------------------------------------------------------------------
# Evaluation
# ---------------------------------------------------------------------------


def _wrap(phase: np.ndarray) -> np.ndarray:
    """Wrap phases into (-pi, pi]."""
    return np.pi - np.mod(np.pi - phase, 2.0 * np.pi)


def _int_power(a: np.ndarray, k: int) -> np.ndarray:
    if k < 0:
        return 1.0 / _int_power(a, -k)
    result = np.ones_like(a)
    base = a
    while k:
        if k & 1:
            result = result * base
        base = base * base
        k >>= 1
    return result


def _as_points(z: Any, dimension: int) -> np.ndarray:
    Z = np.asarray(z, dtype=complex)
    if Z.ndim == 0:
        Z = Z.reshape(1, 1)
    elif Z.ndim == 1:
        Z = Z.reshape(-1, 1)
    if Z.shape[0] < dimension:
        raise DimensionError(
            f"Expression uses z{dimension} but points have dimension {Z.shape[0]}"
        )
    return Z


def _values(e: Expr, Z: np.ndarray, memo: Dict[int, np.ndarray], strict: bool) -> np.ndarray:
    cached = memo.get(id(e))
    if cached is not None:
        return cached

    kind = e.kind
    if kind is NodeKind.VAR:
        out = Z[e.index - 1]
    elif kind is NodeKind.CONST:
        out = np.full(Z.shape[1], e.value, dtype=complex)
    elif kind is NodeKind.NEG:
        out = -_values(e.children[0], Z, memo, strict)
    elif kind is NodeKind.EXP:
        out = np.exp(_values(e.children[0], Z, memo, strict))
    elif kind is NodeKind.INTPOW:
        base = _values(e.children[0], Z, memo, strict)
        if strict and e.exponent < 0 and np.any(base == 0):
            raise DivisionByZeroError(f"Negative power of zero in {e.key}")
        out = _int_power(base, e.exponent)
    else:
        a = _values(e.children[0], Z, memo, strict)
        b = _values(e.children[1], Z, memo, strict)
        if kind is NodeKind.ADD:
            out = a + b
        elif kind is NodeKind.SUB:
            out = a - b
        elif kind is NodeKind.MUL:
            out = a * b
        else:
            if strict and np.any(b == 0):
                raise DivisionByZeroError(f"Division by zero in {e.key}")
            out = a / b

    if strict and not np.all(np.isfinite(out)):
        raise ExprOverflowError(f"Overflow while evaluating {e.key}")
    memo[id(e)] = out
    return out


def evaluate_array(e: Expr, Z: Any, strict: bool = False) -> np.ndarray:
    """Evaluate e at every column of Z (shape (n, M)).

    With strict=False non-finite entries are returned as produced by numpy.
    """
    points = _as_points(Z, e.dimension)
    with np.errstate(all="ignore"):
        return _values(e, points, {}, strict)


def evaluate(e: Expr, z: Any) -> complex:
    """Evaluate e at a single point.

    Raises:
        DivisionByZeroError: the point lies on a divisor of a denominator
        ExprOverflowError: the value is not representable; use evaluate_logmag
    """
    return complex(evaluate_array(e, _as_points(z, e.dimension), strict=True)[0])


def _logmag(
    e: Expr,
    Z: np.ndarray,
    memo: Dict[int, Tuple[np.ndarray, np.ndarray]],
    vmemo: Dict[int, np.ndarray],
    strict: bool,
) -> Tuple[np.ndarray, np.ndarray]:
    cached = memo.get(id(e))
    if cached is not None:
        return cached

    kind = e.kind
    if kind is NodeKind.VAR:
        z = Z[e.index - 1]
        out = (np.log(np.abs(z)), np.angle(z))
    elif kind is NodeKind.CONST:
        m = Z.shape[1]
        la = math.log(abs(e.value)) if e.value != 0 else -np.inf
        out = (np.full(m, la), np.full(m, cmath.phase(e.value)))
    elif kind is NodeKind.NEG:
        la, ph = _logmag(e.children[0], Z, memo, vmemo, strict)
        out = (la, _wrap(ph + np.pi))
    elif kind is NodeKind.INTPOW:
        la, ph = _logmag(e.children[0], Z, memo, vmemo, strict)
        out = (e.exponent * la, _wrap(e.exponent * ph))
    elif kind is NodeKind.EXP:
        child = e.children[0]
        g = _values(child, Z, vmemo, False)
        bad = ~np.isfinite(g)
        if np.any(bad):
            cla, cph = _logmag(child, Z, memo, vmemo, strict)
            g = np.where(bad, np.exp(cla) * np.exp(1j * cph), g)
        out = (g.real.copy(), _wrap(g.imag))
    else:
        a1, p1 = _logmag(e.children[0], Z, memo, vmemo, strict)
        a2, p2 = _logmag(e.children[1], Z, memo, vmemo, strict)
        if kind is NodeKind.MUL:
            out = (a1 + a2, _wrap(p1 + p2))
        elif kind is NodeKind.DIV:
            out = (a1 - a2, _wrap(p1 - p2))
        else:
            if kind is NodeKind.SUB:
                p2 = p2 + np.pi
            out = _logmag_sum(a1, p1, a2, p2, strict, e)

    memo[id(e)] = out
    return out


def _logmag_sum(
    a1: np.ndarray, p1: np.ndarray, a2: np.ndarray, p2: np.ndarray, strict: bool, e: Expr
) -> Tuple[np.ndarray, np.ndarray]:
    top = np.maximum(a1, a2)
    empty = np.isneginf(top)
    if strict and np.any(empty):
        raise IndeterminatePhaseError(f"Both addends vanish in {e.key}")
    infinite = np.isposinf(top)
    shift = np.where(np.isfinite(top), top, 0.0)
    s = np.exp(a1 - shift + 1j * p1) + np.exp(a2 - shift + 1j * p2)
    la = shift + np.log(np.abs(s))
    ph = np.angle(s)
    la = np.where(empty, -np.inf, np.where(infinite, np.inf, la))
    ph = np.where(empty, 0.0, np.where(infinite, np.where(a1 >= a2, p1, p2), ph))
    return la, _wrap(ph)


def logmag_array(e: Expr, Z: Any) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized (log|e|, arg e) at the columns of Z; never forms exp(g) for Exp nodes."""
    points = _as_points(Z, e.dimension)
    with np.errstate(all="ignore"):
        return _logmag(e, points, {}, {}, False)


def evaluate_logmag(e: Expr, z: Any) -> LogMag:
    """Scalar log-modulus evaluation.

    Raises:
        IndeterminatePhaseError: an Add/Sub node has two vanishing addends
    """
    points = _as_points(z, e.dimension)
    with np.errstate(all="ignore"):
        la, ph = _logmag(e, points[:, :1], {}, {}, True)
    return LogMag(log_abs=float(la[0]), phase=float(ph[0]))


# ---------------------------------------------------------------------------
# Symbolic transformations
# ---------------------------------------------------------------------------


def _rebuild(e: Expr, children: List[Expr]) -> Expr:
    kind = e.kind
    if kind is NodeKind.ADD:
        return add(*children)
    if kind is NodeKind.SUB:
        return sub(*children)
    if kind is NodeKind.MUL:
        return mul(*children)
    if kind is NodeKind.DIV:
        return div(*children)
    if kind is NodeKind.NEG:
        return neg(children[0])
    if kind is NodeKind.EXP:
        return exp(children[0])
    return power(children[0], e.exponent)


def shift(e: Expr, c: Sequence[Number]) -> Expr:
    """Replace every z_j by z_j + c_j."""
    offsets = [complex(v) for v in c]
    if len(offsets) < e.dimension:
        raise DimensionError(f"Shift of length {len(offsets)} for an expression in z{e.dimension}")
    memo: Dict[int, Expr] = {}

    def walk(node: Expr) -> Expr:
        done = memo.get(id(node))
        if done is not None:
            return done
        if node.kind is NodeKind.VAR:
            result = add(node, const(offsets[node.index - 1]))
        elif node.kind is NodeKind.CONST:
            result = node
        else:
            result = _rebuild(node, [walk(child) for child in node.children])
        memo[id(node)] = result
        return result

    return walk(e)


def derivative(e: Expr, j: int) -> Expr:
    """Symbolic partial derivative with respect to z_j."""
    if j < 1:
        raise DimensionError(f"Variable index must be >= 1, got {j}")
    memo: Dict[int, Expr] = {}

    def d(node: Expr) -> Expr:
        done = memo.get(id(node))
        if done is not None:
            return done
        kind = node.kind
        if kind is NodeKind.VAR:
            result = const(1 if node.index == j else 0)
        elif kind is NodeKind.CONST:
            result = const(0)
        elif kind is NodeKind.NEG:
            result = neg(d(node.children[0]))
        elif kind is NodeKind.EXP:
            result = mul(node, d(node.children[0]))
        elif kind is NodeKind.INTPOW:
            base = node.children[0]
            k = node.exponent
            result = mul(mul(const(k), power(base, k - 1)), d(base))
        else:
            a, b = node.children
            da, db = d(a), d(b)
            if kind is NodeKind.ADD:
                result = add(da, db)
            elif kind is NodeKind.SUB:
                result = sub(da, db)
            elif kind is NodeKind.MUL:
                result = add(mul(da, b), mul(a, db))
            else:
                result = div(sub(mul(da, b), mul(a, db)), power(b, 2))
        memo[id(node)] = result
        return result

    return d(e)


def to_fraction(e: Expr) -> Tuple[Expr, Expr]:
    """Split e into holomorphic-safe (numerator, denominator).

    Raises:
        InputError: exp of a non-holomorphic argument (essential singularity)
    """
    memo: Dict[int, Tuple[Expr, Expr]] = {}

    def split(node: Expr) -> Tuple[Expr, Expr]:
        done = memo.get(id(node))
        if done is not None:
            return done
        kind = node.kind
        one = const(1)
        if kind in (NodeKind.VAR, NodeKind.CONST):
            result = (node, one)
        elif kind is NodeKind.EXP:
            if not node.children[0].holomorphic_safe:
                raise InputError(f"exp of a meromorphic argument is not meromorphic: {node.key}")
            result = (node, one)
        elif kind is NodeKind.NEG:
            n, dd = split(node.children[0])
            result = (neg(n), dd)
        elif kind is NodeKind.INTPOW:
            n, dd = split(node.children[0])
            k = node.exponent
            result = (power(n, k), power(dd, k)) if k > 0 else (power(dd, -k), power(n, -k))
        else:
            n1, d1 = split(node.children[0])
            n2, d2 = split(node.children[1])
            if kind is NodeKind.MUL:
                result = (mul(n1, n2), mul(d1, d2))
            elif kind is NodeKind.DIV:
                if _is_value(n2, 0):
                    raise DivisionByZeroError(f"Division by zero in {node.key}")
                result = (mul(n1, d2), mul(d1, n2))
            elif d1 == d2:
                combine = add if kind is NodeKind.ADD else sub
                result = (combine(n1, n2), d1)
            else:
                combine = add if kind is NodeKind.ADD else sub
                result = (combine(mul(n1, d2), mul(n2, d1)), mul(d1, d2))
        memo[id(node)] = result
        return result

    num, den = split(e)
    if den.is_const:
        num, den = mul(num, const(1 / den.value)), const(1)
    return num, den


def is_zero_free(e: Expr) -> bool:
    """Structural certificate that e has no zeros on C^n (conservative)."""
    kind = e.kind
    if kind is NodeKind.CONST:
        return e.value != 0
    if kind is NodeKind.EXP:
        return True
    if kind in (NodeKind.MUL, NodeKind.INTPOW, NodeKind.NEG):
        return all(is_zero_free(child) for child in e.children)
    return False


def polynomial_coefficients(e: Expr, index: int) -> List[Expr]:
    """Coefficients (lowest degree first) of a holomorphic-safe e viewed as a polynomial in z_index.

    Raises:
        InputError: e is not polynomial in z_index (e.g. z_index inside exp)
    """

    def contains(node: Expr) -> bool:
        if node.kind is NodeKind.VAR:
            return node.index == index
        return any(contains(child) for child in node.children)

    def convolve(p: List[Expr], q: List[Expr]) -> List[Expr]:
        out = [const(0)] * (len(p) + len(q) - 1)
        for i, a in enumerate(p):
            for k, b in enumerate(q):
                out[i + k] = add(out[i + k], mul(a, b))
        return out

    def combine(p: List[Expr], q: List[Expr], sign: int) -> List[Expr]:
        size = max(len(p), len(q))
        p = p + [const(0)] * (size - len(p))
        q = q + [const(0)] * (size - len(q))
        return [add(a, b) if sign > 0 else sub(a, b) for a, b in zip(p, q)]

    def coeffs(node: Expr) -> List[Expr]:
        if not contains(node):
            return [node]
        kind = node.kind
        if kind is NodeKind.VAR:
            return [const(0), const(1)]
        if kind is NodeKind.NEG:
            return [neg(c) for c in coeffs(node.children[0])]
        if kind is NodeKind.ADD or kind is NodeKind.SUB:
            sign = 1 if kind is NodeKind.ADD else -1
            return combine(coeffs(node.children[0]), coeffs(node.children[1]), sign)
        if kind is NodeKind.MUL:
            return convolve(coeffs(node.children[0]), coeffs(node.children[1]))
        if kind is NodeKind.INTPOW and node.exponent > 0:
            base = coeffs(node.children[0])
            out = [const(1)]
            for _ in range(node.exponent):
                out = convolve(out, base)
            return out
        raise InputError(f"Expression is not polynomial in z{index}: {node.key}")

    return coeffs(e)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?i?)"
    r"|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^()]))"
)

_CONSTANTS = {"i": 1j, "pi": math.pi, "e": math.e}


def _tokenize(text: str) -> List[Tuple[str, str]]:
    tokens: List[Tuple[str, str]] = []
    pos = 0
    stripped = text.rstrip()
    while pos < len(stripped):
        match = _TOKEN.match(stripped, pos)
        if match is None or match.end() == pos:
            raise ExprParseError(f"Unexpected character at position {pos}: {text[pos:pos + 10]!r}")
        kind = match.lastgroup
        assert kind is not None
        tokens.append((kind, match.group(kind)))
        pos = match.end()
    return tokens


class _Parser:
    """Recursive-descent parser; implicit multiplication between adjacent atoms."""

    def __init__(self, text: str, names: Dict[str, int]):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.names = names

    def peek(self) -> Optional[Tuple[str, str]]:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> Tuple[str, str]:
        token = self.peek()
        if token is None:
            raise ExprParseError("Unexpected end of expression")
        self.pos += 1
        return token

    def expect(self, op: str) -> None:
        token = self.take()
        if token != ("op", op):
            raise ExprParseError(f"Expected {op!r}, got {token[1]!r}")

    def parse(self) -> Expr:
        if not self.tokens:
            raise ExprParseError("Empty expression")
        result = self.expression()
        if self.peek() is not None:
            raise ExprParseError(f"Unexpected token {self.peek()[1]!r}")  # type: ignore[index]
        return result

    def expression(self) -> Expr:
        result = self.term()
        while self.peek() in (("op", "+"), ("op", "-")):
            op = self.take()[1]
            rhs = self.term()
            result = add(result, rhs) if op == "+" else sub(result, rhs)
        return result

    def term(self) -> Expr:
        result = self.unary()
        while True:
            token = self.peek()
            if token in (("op", "*"), ("op", "/")):
                self.take()
                rhs = self.unary()
                is_mul = token == ("op", "*")
                result = mul(result, rhs) if is_mul else div(result, rhs)
            elif token is not None and (token[0] in ("num", "name") or token == ("op", "(")):
                result = mul(result, self.power())
            else:
                return result

    def unary(self) -> Expr:
        token = self.peek()
        if token == ("op", "-"):
            self.take()
            return neg(self.unary())
        if token == ("op", "+"):
            self.take()
            return self.unary()
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        if self.peek() == ("op", "^"):
            self.take()
            return power(base, self.integer_exponent())
        return base

    def integer_exponent(self) -> int:
        token = self.take()
        wrapped = token == ("op", "(")
        if wrapped:
            token = self.take()
        sign = 1
        if token in (("op", "-"), ("op", "+")):
            sign = -1 if token[1] == "-" else 1
            token = self.take()
        if token[0] != "num" or not token[1].isdigit():
            raise ExprParseError(f"Exponent must be an integer, got {token[1]!r}")
        if wrapped:
            self.expect(")")
        return sign * int(token[1])

    def atom(self) -> Expr:
        kind, text = self.take()
        if kind == "num":
            if text.endswith("i"):
                return const(complex(0, float(text[:-1])))
            return const(float(text))
        if kind == "name":
            if text == "exp":
                self.expect("(")
                inner = self.expression()
                self.expect(")")
                return exp(inner)
            if text in self.names:
                return var(self.names[text])
            if re.fullmatch(r"z[1-9]\d*", text):
                return var(int(text[1:]))
            if text in _CONSTANTS:
                return const(_CONSTANTS[text])
            raise ExprParseError(f"Unknown name {text!r}")
        if text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        raise ExprParseError(f"Unexpected token {text!r}")


def parse_expr(text: str, n: Optional[int] = None, extra: Optional[Dict[str, int]] = None) -> Expr:
    """Parse the text grammar into an Expr.

    Args:
        text: expression such as "exp(z1) * (z2 - 2.5i)"; "z" is an alias of z1
        n: declared dimension; variables beyond it raise DimensionError
        extra: additional variable names mapped to indices (e.g. {"u": n + 1})
    """
    names = {"z": 1}
    names.update(extra or {})
    result = _Parser(text, names).parse()
    limit = (n or 0) + len(extra or {})
    if n is not None and result.dimension > limit:
        raise DimensionError(f"{text!r} uses z{result.dimension} but n = {n}")
    return result


# ---------------------------------------------------------------------------
# Meromorphic maps
# ---------------------------------------------------------------------------


def vanishes_identically(e: Expr, n: int, samples: int = 12, seed: int = 20240611) -> bool:
    if e.is_const:
        return e.value == 0
    rng = np.random.default_rng(seed)
    Z = rng.uniform(-1.0, 1.0, (n, samples)) + 1j * rng.uniform(-1.0, 1.0, (n, samples))
    values = evaluate_array(e, Z)
    return bool(np.all(np.isfinite(values)) and np.all(np.abs(values) <= 1e-12))


@dataclass(frozen=True)
class MeromorphicMap:
    """f = f1 / f0 : C^n -> P^1 with holomorphic-safe components."""

    n: int
    f0: Expr
    f1: Expr
    label: str = ""

    def __post_init__(self) -> None:
        if self.n < 1:
            raise DimensionError(f"Dimension must be >= 1, got {self.n}")
        for name, part in (("f0", self.f0), ("f1", self.f1)):
            if not part.holomorphic_safe:
                raise InputError(f"{name} must be free of division: {part.key}")
            if part.dimension > self.n:
                raise DimensionError(f"{name} uses z{part.dimension} but n = {self.n}")
        if vanishes_identically(self.f0, self.n):
            raise InputError("Denominator f0 vanishes identically")
        if not self.label:
            object.__setattr__(self, "label", f"({self.f1.key}) / ({self.f0.key})")

    @classmethod
    def from_text(cls, text: str, n: int = 1) -> "MeromorphicMap":
        num, den = to_fraction(parse_expr(text, n))
        return cls(n=n, f0=den, f1=num, label=text)

    @classmethod
    def from_pair(cls, f0_text: str, f1_text: str, n: int = 1) -> "MeromorphicMap":
        f0, f1 = parse_expr(f0_text, n), parse_expr(f1_text, n)
        return cls(n=n, f0=f0, f1=f1, label=f"({f1_text}) / ({f0_text})")

    @cached_property
    def origin(self) -> np.ndarray:
        return np.zeros((self.n, 1), dtype=complex)

    @cached_property
    def base_regular(self) -> bool:
        """True when f0(0) != 0 and f1(0) != 0."""
        v0 = evaluate_array(self.f0, self.origin)[0]
        v1 = evaluate_array(self.f1, self.origin)[0]
        return bool(v0 != 0 and v1 != 0 and np.isfinite(v0) and np.isfinite(v1))

    @cached_property
    def is_constant(self) -> bool:
        return self.f0.dimension == 0 and self.f1.dimension == 0

    def logmag(self, Z: Any) -> Tuple[np.ndarray, np.ndarray]:
        """(log|f|, arg f) at the columns of Z; NaN where f is indeterminate."""
        la1, ph1 = logmag_array(self.f1, Z)
        la0, ph0 = logmag_array(self.f0, Z)
        with np.errstate(invalid="ignore"):
            return la1 - la0, _wrap(ph1 - ph0)

    def log_modulus(self, Z: Any) -> np.ndarray:
        return self.logmag(Z)[0]

    def values(self, Z: Any) -> np.ndarray:
        """Complex values rebuilt from the log-modulus (inf at poles)."""
        la, ph = self.logmag(Z)
        with np.errstate(all="ignore"):
            return np.exp(la) * np.exp(1j * ph)

    def value(self, z: Any) -> complex:
        num = evaluate(self.f1, z)
        den = evaluate(self.f0, z)
        if den == 0:
            raise DivisionByZeroError(f"{self.label} has a pole at {z}")
        return num / den

    def value_at_origin(self) -> complex:
        return complex(self.values(self.origin)[0])

    def a_point_function(self, a: Target) -> Expr:
        """g = f1 - a f0 for finite a, g = f0 for a = infinity."""
        if a is None:
            return self.f0
        return sub(self.f1, mul(const(a), self.f0))

    def shifted(self, c: Sequence[Number], label: str = "") -> "MeromorphicMap":
        return MeromorphicMap(
            self.n,
            shift(self.f0, c),
            shift(self.f1, c),
            label or f"{self.label} shifted by {list(c)}",
        )

    def reciprocal(self) -> "MeromorphicMap":
        return MeromorphicMap(self.n, self.f1, self.f0, f"1 / ({self.label})")

    def minus(self, a: complex) -> "MeromorphicMap":
        return MeromorphicMap(self.n, self.f0, self.a_point_function(a), f"{self.label} - {a}")

    def power(self, k: int) -> "MeromorphicMap":
        if k < 1:
            raise InputError("Only positive powers of maps are supported")
        return MeromorphicMap(self.n, power(self.f0, k), power(self.f1, k), f"({self.label})^{k}")

    def plus(self, other: "MeromorphicMap") -> "MeromorphicMap":
        return MeromorphicMap(
            self.n,
            mul(self.f0, other.f0),
            add(mul(self.f1, other.f0), mul(other.f1, self.f0)),
            f"{self.label} + {other.label}",
        )
