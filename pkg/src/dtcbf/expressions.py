"""Immutable symbolic scalar expressions over state/input/parameter variables.

An expression is a finite DAG of nodes (constants, variables, arithmetic,
integer powers, and a small set of transcendental functions).  The module
provides:

* point evaluation (scalar or numpy-vectorized),
* exact forward-mode gradients and Hessians with respect to one variable
  kind,
* interval enclosures of values and of every Hessian entry over a box,
* structural substitution (used to compose dynamics, policies and
  rate functions) with light constant folding.

Variable kinds are "x" (state), "u" (input) and "p" (parameter; the
synthesis coefficient vector).  A rate function gamma is represented as
an expression in a single variable Var("x", 0) standing for its scalar
argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Union

import numpy as np

from .errors import DomainViolation, NonSmooth
from .intervals import BoxN, Interval
from . import intervals as iv

__all__ = [
    "Expr",
    "Const",
    "Var",
    "Neg",
    "Add",
    "Sub",
    "Mul",
    "Div",
    "PowInt",
    "Call",
    "ExprVec",
    "const",
    "var",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "pow_int",
    "call",
    "evaluate",
    "gradient",
    "hessian",
    "taylor2",
    "interval_evaluate",
    "interval_hessian",
    "interval_taylor2",
    "substitute",
    "variables",
    "expr_size",
    "gamma_identity",
    "gamma_linear",
    "apply_gamma",
    "gamma_report",
]

FUNCTIONS = ("sin", "cos", "tan", "exp", "log", "sqrt", "abs")

Scalar = Union[int, float]


class Expr:
    """Base class for expression nodes.  Nodes are immutable; operators
    build new folded nodes."""

    __slots__ = ()

    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __truediv__(self, other):
        return div(self, _wrap(other))

    def __rtruediv__(self, other):
        return div(_wrap(other), self)

    def __pow__(self, p):
        return pow_int(self, p)

    def __neg__(self):
        return neg(self)


@dataclass(frozen=True, slots=True, eq=False)
class Const(Expr):
    value: float

    def __repr__(self):
        return repr(self.value)


@dataclass(frozen=True, slots=True, eq=False)
class Var(Expr):
    kind: str  # "x" | "u" | "p"
    index: int

    def __repr__(self):
        return f"{self.kind}{self.index + 1}"


@dataclass(frozen=True, slots=True, eq=False)
class Neg(Expr):
    a: Expr

    def __repr__(self):
        return f"(-{self.a!r})"


@dataclass(frozen=True, slots=True, eq=False)
class Add(Expr):
    a: Expr
    b: Expr

    def __repr__(self):
        return f"({self.a!r} + {self.b!r})"


@dataclass(frozen=True, slots=True, eq=False)
class Sub(Expr):
    a: Expr
    b: Expr

    def __repr__(self):
        return f"({self.a!r} - {self.b!r})"


@dataclass(frozen=True, slots=True, eq=False)
class Mul(Expr):
    a: Expr
    b: Expr

    def __repr__(self):
        return f"({self.a!r} * {self.b!r})"


@dataclass(frozen=True, slots=True, eq=False)
class Div(Expr):
    a: Expr
    b: Expr

    def __repr__(self):
        return f"({self.a!r} / {self.b!r})"


@dataclass(frozen=True, slots=True, eq=False)
class PowInt(Expr):
    a: Expr
    p: int

    def __repr__(self):
        return f"({self.a!r}^{self.p})"


@dataclass(frozen=True, slots=True, eq=False)
class Call(Expr):
    fn: str
    a: Expr

    def __repr__(self):
        return f"{self.fn}({self.a!r})"


@dataclass(frozen=True, slots=True)
class ExprVec:
    """Ordered nonempty list of expressions sharing a variable context."""

    components: tuple[Expr, ...]

    def __post_init__(self):
        if len(self.components) == 0:
            raise ValueError("ExprVec must be nonempty")

    def __len__(self):
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, i):
        return self.components[i]


# ---------------------------------------------------------------------------
# smart constructors (light constant folding; value-preserving where defined)
# ---------------------------------------------------------------------------


def _wrap(v) -> Expr:
    if isinstance(v, Expr):
        return v
    return Const(float(v))


def const(v: Scalar) -> Const:
    return Const(float(v))


def var(kind: str, index: int) -> Var:
    if kind not in ("x", "u", "p"):
        raise ValueError(f"unknown variable kind {kind!r}")
    if index < 0:
        raise ValueError("variable index must be non-negative")
    return Var(kind, index)


def _is_const(e: Expr, v: float | None = None) -> bool:
    return type(e) is Const and (v is None or e.value == v)


def add(a: Expr, b: Expr) -> Expr:
    a, b = _wrap(a), _wrap(b)
    if type(a) is Const and type(b) is Const:
        return Const(a.value + b.value)
    if _is_const(a, 0.0):
        return b
    if _is_const(b, 0.0):
        return a
    return Add(a, b)


def sub(a: Expr, b: Expr) -> Expr:
    a, b = _wrap(a), _wrap(b)
    if type(a) is Const and type(b) is Const:
        return Const(a.value - b.value)
    if _is_const(b, 0.0):
        return a
    if _is_const(a, 0.0):
        return neg(b)
    return Sub(a, b)


def mul(a: Expr, b: Expr) -> Expr:
    a, b = _wrap(a), _wrap(b)
    if type(a) is Const and type(b) is Const:
        return Const(a.value * b.value)
    if _is_const(a, 0.0) or _is_const(b, 0.0):
        return Const(0.0)
    if _is_const(a, 1.0):
        return b
    if _is_const(b, 1.0):
        return a
    if _is_const(a, -1.0):
        return neg(b)
    if _is_const(b, -1.0):
        return neg(a)
    return Mul(a, b)


def div(a: Expr, b: Expr) -> Expr:
    a, b = _wrap(a), _wrap(b)
    if type(b) is Const:
        if b.value == 0.0:
            raise DomainViolation("division by constant zero")
        if type(a) is Const:
            return Const(a.value / b.value)
        if b.value == 1.0:
            return a
    return Div(a, b)


def neg(a: Expr) -> Expr:
    a = _wrap(a)
    if type(a) is Const:
        return Const(-a.value)
    if type(a) is Neg:
        return a.a
    return Neg(a)


def pow_int(a: Expr, p: int) -> Expr:
    a = _wrap(a)
    if not isinstance(p, int) or isinstance(p, bool):
        raise ValueError("exponent must be an integer")
    if p == 0:
        return Const(1.0)
    if p == 1:
        return a
    if type(a) is Const:
        if a.value == 0.0 and p < 0:
            raise DomainViolation("zero raised to a negative power")
        return Const(float(a.value**p))
    return PowInt(a, p)


def call(fn: str, a: Expr) -> Expr:
    a = _wrap(a)
    if fn not in FUNCTIONS:
        raise ValueError(f"unknown function {fn!r}")
    if type(a) is Const:
        return Const(_MATH_FN[fn](a.value))
    return Call(fn, a)


# ---------------------------------------------------------------------------
# point evaluation
# ---------------------------------------------------------------------------


def _m_log(v):
    if v <= 0.0:
        raise DomainViolation(f"log of non-positive value {v}")
    return math.log(v)


def _m_sqrt(v):
    if v < 0.0:
        raise DomainViolation(f"sqrt of negative value {v}")
    return math.sqrt(v)


_MATH_FN = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": _m_log,
    "sqrt": _m_sqrt,
    "abs": abs,
}


def _np_log(v):
    if np.any(v <= 0.0):
        raise DomainViolation("log of non-positive value in array")
    return np.log(v)


def _np_sqrt(v):
    if np.any(v < 0.0):
        raise DomainViolation("sqrt of negative value in array")
    return np.sqrt(v)


_NP_FN = {
    "sin": np.sin,
    "cos": np.cos,
    "tan": np.tan,
    "exp": np.exp,
    "log": _np_log,
    "sqrt": _np_sqrt,
    "abs": np.abs,
}

Env = Mapping[str, object]  # kind -> sequence of floats or of arrays


def evaluate(e: Expr, env: Env):
    """Evaluate at a point.  env maps kind -> indexable of values; values
    may be floats or equally-shaped numpy arrays (vectorized evaluation).
    Deterministic: identical inputs give bit-identical results."""
    vectorized = any(
        isinstance(c, np.ndarray) and c.ndim > 0 for seq in env.values() for c in seq
    )
    fns = _NP_FN if vectorized else _MATH_FN
    memo: dict[int, object] = {}

    def rec(node):
        key = id(node)
        got = memo.get(key)
        if got is not None:
            return got
        t = type(node)
        if t is Const:
            r = node.value
        elif t is Var:
            try:
                r = env[node.kind][node.index]
            except (KeyError, IndexError) as exc:
                raise DomainViolation(
                    f"unbound variable {node.kind}{node.index + 1}"
                ) from exc
            if not vectorized:
                r = float(r)
        elif t is Add:
            r = rec(node.a) + rec(node.b)
        elif t is Sub:
            r = rec(node.a) - rec(node.b)
        elif t is Mul:
            r = rec(node.a) * rec(node.b)
        elif t is Div:
            den = rec(node.b)
            if vectorized:
                if np.any(den == 0.0):
                    raise DomainViolation("division by zero in array")
            elif den == 0.0:
                raise DomainViolation("division by zero")
            r = rec(node.a) / den
        elif t is Neg:
            r = -rec(node.a)
        elif t is PowInt:
            base = rec(node.a)
            if node.p < 0:
                if vectorized:
                    if np.any(base == 0.0):
                        raise DomainViolation("zero base with negative power")
                elif base == 0.0:
                    raise DomainViolation("zero base with negative power")
            r = base ** node.p
        elif t is Call:
            r = fns[node.fn](rec(node.a))
        else:  # pragma: no cover
            raise TypeError(f"unknown node type {t}")
        memo[key] = r
        return r

    return rec(e)


# ---------------------------------------------------------------------------
# forward-mode derivatives (exact, DAG-shared)
# ---------------------------------------------------------------------------


def _unary_derivs(fn: str, v: float) -> tuple[float, float, float]:
    """(phi(v), phi'(v), phi''(v)) for a unary function at a point."""
    if fn == "sin":
        s, c = math.sin(v), math.cos(v)
        return s, c, -s
    if fn == "cos":
        s, c = math.sin(v), math.cos(v)
        return c, -s, -c
    if fn == "tan":
        t = math.tan(v)
        s = 1.0 + t * t
        return t, s, 2.0 * t * s
    if fn == "exp":
        e_ = math.exp(v)
        return e_, e_, e_
    if fn == "log":
        if v <= 0.0:
            raise DomainViolation(f"log of non-positive value {v}")
        return math.log(v), 1.0 / v, -1.0 / (v * v)
    if fn == "sqrt":
        if v < 0.0:
            raise DomainViolation(f"sqrt of negative value {v}")
        if v == 0.0:
            raise DomainViolation("sqrt not differentiable at 0")
        s = math.sqrt(v)
        return s, 0.5 / s, -0.25 / (s * v)
    if fn == "abs":
        if v == 0.0:
            raise NonSmooth("abs differentiated at its kink")
        sign = 1.0 if v > 0.0 else -1.0
        return abs(v), sign, 0.0
    raise ValueError(fn)  # pragma: no cover


def taylor2(e: Expr, env: Env, wrt: str, dim: int):
    """Value, gradient and Hessian with respect to the `wrt` kind.

    Returns (value: float, grad: list[float], hess: list[list[float]]).
    Variables of other kinds are treated as constants from env.
    """
    memo: dict[int, tuple] = {}
    zeros_g = [0.0] * dim

    def rec(node):
        key = id(node)
        got = memo.get(key)
        if got is not None:
            return got
        t = type(node)
        if t is Const:
            r = (node.value, zeros_g, None)
        elif t is Var:
            v = float(env[node.kind][node.index])
            if node.kind == wrt:
                g = [0.0] * dim
                g[node.index] = 1.0
                r = (v, g, None)
            else:
                r = (v, zeros_g, None)
        elif t is Add:
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            g = [ga[i] + gb[i] for i in range(dim)]
            h = _h_add(ha, hb, dim)
            r = (va + vb, g, h)
        elif t is Sub:
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            g = [ga[i] - gb[i] for i in range(dim)]
            h = _h_sub(ha, hb, dim)
            r = (va - vb, g, h)
        elif t is Neg:
            va, ga, ha = rec(node.a)
            g = [-ga[i] for i in range(dim)]
            h = None if ha is None else [[-ha[i][j] for j in range(dim)] for i in range(dim)]
            r = (-va, g, h)
        elif t is Mul:
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            v = va * vb
            g = [va * gb[i] + vb * ga[i] for i in range(dim)]
            h = [[0.0] * dim for _ in range(dim)]
            for i in range(dim):
                gai, gbi = ga[i], gb[i]
                hi = h[i]
                hai = ha[i] if ha is not None else None
                hbi = hb[i] if hb is not None else None
                for j in range(dim):
                    acc = gai * gb[j] + gbi * ga[j]
                    if hai is not None:
                        acc += vb * hai[j]
                    if hbi is not None:
                        acc += va * hbi[j]
                    hi[j] = acc
            r = (v, g, h)
        elif t is Div:
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            if vb == 0.0:
                raise DomainViolation("division by zero")
            v = va / vb
            g = [(ga[i] - v * gb[i]) / vb for i in range(dim)]
            h = [[0.0] * dim for _ in range(dim)]
            for i in range(dim):
                gi, gbi = g[i], gb[i]
                hi = h[i]
                hai = ha[i] if ha is not None else None
                hbi = hb[i] if hb is not None else None
                for j in range(dim):
                    acc = -gi * gb[j] - gbi * g[j]
                    if hai is not None:
                        acc += hai[j]
                    if hbi is not None:
                        acc -= v * hbi[j]
                    hi[j] = acc / vb
            r = (v, g, h)
        elif t is PowInt:
            va, ga, ha = rec(node.a)
            p = node.p
            if p < 0 and va == 0.0:
                raise DomainViolation("zero base with negative power")
            v = va**p
            d1 = p * va ** (p - 1) if p != 0 else 0.0
            d2 = p * (p - 1) * va ** (p - 2) if p not in (0, 1) else 0.0
            r = _chain(v, d1, d2, va, ga, ha, dim)
        elif t is Call:
            va, ga, ha = rec(node.a)
            v, d1, d2 = _unary_derivs(node.fn, va)
            r = _chain(v, d1, d2, va, ga, ha, dim)
        else:  # pragma: no cover
            raise TypeError(f"unknown node type {t}")
        memo[key] = r
        return r

    v, g, h = rec(e)
    if h is None:
        h = [[0.0] * dim for _ in range(dim)]
    return v, list(g), h


def _h_add(ha, hb, dim):
    if ha is None:
        return hb
    if hb is None:
        return ha
    return [[ha[i][j] + hb[i][j] for j in range(dim)] for i in range(dim)]


def _h_sub(ha, hb, dim):
    if hb is None:
        return ha
    if ha is None:
        return [[-hb[i][j] for j in range(dim)] for i in range(dim)]
    return [[ha[i][j] - hb[i][j] for j in range(dim)] for i in range(dim)]


def _chain(v, d1, d2, va, ga, ha, dim):
    """Chain rule through a scalar function given inner (va, ga, ha)."""
    g = [d1 * ga[i] for i in range(dim)]
    h = [[0.0] * dim for _ in range(dim)]
    for i in range(dim):
        gai = ga[i]
        hi = h[i]
        hai = ha[i] if ha is not None else None
        for j in range(dim):
            acc = d2 * gai * ga[j]
            if hai is not None:
                acc += d1 * hai[j]
            hi[j] = acc
    return v, g, h


def gradient(e: Expr, env: Env, wrt: str, dim: int) -> np.ndarray:
    v, g, _ = taylor2(e, env, wrt, dim)
    return np.array(g, dtype=float)


def hessian(e: Expr, env: Env, wrt: str, dim: int) -> np.ndarray:
    _, _, h = taylor2(e, env, wrt, dim)
    return np.array(h, dtype=float)


# ---------------------------------------------------------------------------
# interval enclosures
# ---------------------------------------------------------------------------

IntervalEnv = Mapping[str, BoxN]

_IV_FN = {
    "sin": iv.sin,
    "cos": iv.cos,
    "tan": iv.tan,
    "exp": iv.exp,
    "log": iv.log,
    "sqrt": iv.sqrt,
    "abs": iv.absolute,
}


def interval_evaluate(e: Expr, env: IntervalEnv, inflation: float = 0.0) -> Interval:
    """Enclosure of the range of e over the box environment.

    Natural interval extension; inclusion-isotone in the boxes."""
    memo: dict[int, Interval] = {}

    def rec(node) -> Interval:
        key = id(node)
        got = memo.get(key)
        if got is not None:
            return got
        t = type(node)
        if t is Const:
            r = Interval.point(node.value)
        elif t is Var:
            try:
                r = env[node.kind].dims[node.index]
            except (KeyError, IndexError) as exc:
                raise DomainViolation(
                    f"unbound variable {node.kind}{node.index + 1}"
                ) from exc
        elif t is Add:
            r = iv.add(rec(node.a), rec(node.b))
        elif t is Sub:
            r = iv.sub(rec(node.a), rec(node.b))
        elif t is Mul:
            r = iv.mul(rec(node.a), rec(node.b))
        elif t is Div:
            r = iv.div(rec(node.a), rec(node.b))
        elif t is Neg:
            r = iv.neg(rec(node.a))
        elif t is PowInt:
            r = iv.pow_int(rec(node.a), node.p)
        elif t is Call:
            r = _IV_FN[node.fn](rec(node.a))
        else:  # pragma: no cover
            raise TypeError(f"unknown node type {t}")
        if inflation:
            r = r.inflate(inflation)
        memo[key] = r
        return r

    return rec(e)


def _iv_unary_derivs(fn: str, v: Interval) -> tuple[Interval, Interval, Interval]:
    """Interval enclosures of (phi, phi', phi'') over v."""
    if fn == "sin":
        return iv.sin(v), iv.cos(v), iv.neg(iv.sin(v))
    if fn == "cos":
        return iv.cos(v), iv.neg(iv.sin(v)), iv.neg(iv.cos(v))
    if fn == "tan":
        t = iv.tan(v)
        s = iv.add(iv.pow_int(t, 2), Interval.point(1.0))
        return t, s, iv.mul(Interval.point(2.0), iv.mul(t, s))
    if fn == "exp":
        e_ = iv.exp(v)
        return e_, e_, e_
    if fn == "log":
        one = Interval.point(1.0)
        return iv.log(v), iv.div(one, v), iv.neg(iv.div(one, iv.pow_int(v, 2)))
    if fn == "sqrt":
        if v.lo <= 0.0:
            raise DomainViolation("sqrt not differentiable on interval reaching 0")
        s = iv.sqrt(v)
        return (
            s,
            iv.div(Interval.point(0.5), s),
            iv.neg(iv.div(Interval.point(0.25), iv.mul(s, v))),
        )
    if fn == "abs":
        if v.contains_zero():
            raise NonSmooth("abs differentiated over interval containing its kink")
        sign = 1.0 if v.lo > 0.0 else -1.0
        return iv.absolute(v), Interval.point(sign), Interval.point(0.0)
    raise ValueError(fn)  # pragma: no cover


def interval_taylor2(e: Expr, env: IntervalEnv, wrt: str, dim: int, inflation: float = 0.0):
    """Interval value, gradient and Hessian wrt the `wrt` kind over a box
    environment.  Returns (Interval, list[Interval], list[list[Interval]])."""
    memo: dict[int, tuple] = {}
    Z = Interval.point(0.0)
    zeros_g = [Z] * dim

    def infl(r: Interval) -> Interval:
        return r.inflate(inflation) if inflation else r

    def rec(node):
        key = id(node)
        got = memo.get(key)
        if got is not None:
            return got
        t = type(node)
        if t is Const:
            r = (Interval.point(node.value), zeros_g, None)
        elif t is Var:
            v = env[node.kind].dims[node.index]
            if node.kind == wrt:
                g = [Z] * dim
                g[node.index] = Interval.point(1.0)
                r = (v, g, None)
            else:
                r = (v, zeros_g, None)
        elif t in (Add, Sub):
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            op = iv.add if t is Add else iv.sub
            v = infl(op(va, vb))
            g = [op(ga[i], gb[i]) for i in range(dim)]
            if ha is None and hb is None:
                h = None
            else:
                ha_ = ha if ha is not None else _zmat(dim, Z)
                hb_ = hb if hb is not None else _zmat(dim, Z)
                h = [[op(ha_[i][j], hb_[i][j]) for j in range(dim)] for i in range(dim)]
            r = (v, g, h)
        elif t is Neg:
            va, ga, ha = rec(node.a)
            g = [iv.neg(ga[i]) for i in range(dim)]
            h = None if ha is None else [
                [iv.neg(ha[i][j]) for j in range(dim)] for i in range(dim)
            ]
            r = (iv.neg(va), g, h)
        elif t is Mul:
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            v = infl(iv.mul(va, vb))
            g = [iv.add(iv.mul(va, gb[i]), iv.mul(vb, ga[i])) for i in range(dim)]
            h = [[Z] * dim for _ in range(dim)]
            for i in range(dim):
                for j in range(dim):
                    acc = iv.add(iv.mul(ga[i], gb[j]), iv.mul(ga[j], gb[i]))
                    if ha is not None:
                        acc = iv.add(acc, iv.mul(vb, ha[i][j]))
                    if hb is not None:
                        acc = iv.add(acc, iv.mul(va, hb[i][j]))
                    h[i][j] = acc
            r = (v, g, h)
        elif t is Div:
            va, ga, ha = rec(node.a)
            vb, gb, hb = rec(node.b)
            v = infl(iv.div(va, vb))
            g = [iv.div(iv.sub(ga[i], iv.mul(v, gb[i])), vb) for i in range(dim)]
            h = [[Z] * dim for _ in range(dim)]
            for i in range(dim):
                for j in range(dim):
                    acc = iv.neg(iv.add(iv.mul(g[i], gb[j]), iv.mul(gb[i], g[j])))
                    if ha is not None:
                        acc = iv.add(acc, ha[i][j])
                    if hb is not None:
                        acc = iv.sub(acc, iv.mul(v, hb[i][j]))
                    h[i][j] = iv.div(acc, vb)
            r = (v, g, h)
        elif t is PowInt:
            va, ga, ha = rec(node.a)
            p = node.p
            v = infl(iv.pow_int(va, p))
            d1 = iv.mul(Interval.point(float(p)), iv.pow_int(va, p - 1))
            if p in (0, 1):
                d2 = Z
            else:
                d2 = iv.mul(Interval.point(float(p * (p - 1))), iv.pow_int(va, p - 2))
            r = _iv_chain(v, d1, d2, ga, ha, dim, Z)
        elif t is Call:
            va, ga, ha = rec(node.a)
            v, d1, d2 = _iv_unary_derivs(node.fn, va)
            r = _iv_chain(infl(v), d1, d2, ga, ha, dim, Z)
        else:  # pragma: no cover
            raise TypeError(f"unknown node type {t}")
        memo[key] = r
        return r

    v, g, h = rec(e)
    if h is None:
        h = _zmat(dim, Z)
    return v, list(g), h


def _zmat(dim, Z):
    return [[Z] * dim for _ in range(dim)]


def _iv_chain(v, d1, d2, ga, ha, dim, Z):
    g = [iv.mul(d1, ga[i]) for i in range(dim)]
    h = [[Z] * dim for _ in range(dim)]
    for i in range(dim):
        for j in range(dim):
            acc = iv.mul(d2, iv.mul(ga[i], ga[j]))
            if ha is not None:
                acc = iv.add(acc, iv.mul(d1, ha[i][j]))
            h[i][j] = acc
    return v, g, h


def interval_hessian(e: Expr, env: IntervalEnv, wrt: str, dim: int, inflation: float = 0.0):
    """Matrix of interval enclosures of every second partial over the box."""
    _, _, h = interval_taylor2(e, env, wrt, dim, inflation)
    return h


# ---------------------------------------------------------------------------
# structure utilities
# ---------------------------------------------------------------------------


def substitute(e: Expr, mapping: Mapping[tuple[str, int], object]) -> Expr:
    """Replace variables by expressions or numbers, rebuilding with the
    folding constructors.  Keys are (kind, index)."""
    memo: dict[int, Expr] = {}

    def rec(node) -> Expr:
        key = id(node)
        got = memo.get(key)
        if got is not None:
            return got
        t = type(node)
        if t is Const:
            r = node
        elif t is Var:
            rep = mapping.get((node.kind, node.index))
            r = node if rep is None else _wrap(rep)
        elif t is Add:
            r = add(rec(node.a), rec(node.b))
        elif t is Sub:
            r = sub(rec(node.a), rec(node.b))
        elif t is Mul:
            r = mul(rec(node.a), rec(node.b))
        elif t is Div:
            r = div(rec(node.a), rec(node.b))
        elif t is Neg:
            r = neg(rec(node.a))
        elif t is PowInt:
            r = pow_int(rec(node.a), node.p)
        elif t is Call:
            r = call(node.fn, rec(node.a))
        else:  # pragma: no cover
            raise TypeError(f"unknown node type {t}")
        memo[key] = r
        return r

    return rec(e)


def variables(e: Expr) -> set[tuple[str, int]]:
    """All (kind, index) pairs referenced by e."""
    seen: set[int] = set()
    out: set[tuple[str, int]] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        t = type(node)
        if t is Var:
            out.add((node.kind, node.index))
        elif t in (Add, Sub, Mul, Div):
            stack.append(node.a)
            stack.append(node.b)
        elif t in (Neg, PowInt, Call):
            stack.append(node.a)
    return out


def expr_size(e: Expr) -> int:
    """Number of distinct nodes in the DAG."""
    seen: set[int] = set()
    stack = [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        t = type(node)
        if t in (Add, Sub, Mul, Div):
            stack.append(node.a)
            stack.append(node.b)
        elif t in (Neg, PowInt, Call):
            stack.append(node.a)
    return len(seen)


# ---------------------------------------------------------------------------
# rate functions (gamma): expressions in one variable Var("x", 0)
# ---------------------------------------------------------------------------


def gamma_identity() -> Expr:
    return Var("x", 0)


def gamma_linear(c: float) -> Expr:
    if not (0.0 < c <= 1.0):
        raise ValueError(f"linear rate coefficient must be in (0, 1], got {c}")
    return mul(Const(float(c)), Var("x", 0))


def apply_gamma(gamma: Expr, arg: Expr) -> Expr:
    """Compose gamma with a scalar expression argument."""
    return substitute(gamma, {("x", 0): arg})


def gamma_report(gamma: Expr, r_max: float, samples: int = 512) -> str | None:
    """Sampled check that gamma is a valid rate function on [0, r_max]:
    gamma(0) = 0, strictly increasing, gamma(r) <= r.  Returns None when
    the check passes, else a human-readable reason."""
    r_max = max(float(r_max), 1e-6)
    rs = np.linspace(0.0, r_max, samples)
    try:
        vals = np.array([evaluate(gamma, {"x": (float(r),)}) for r in rs])
    except (DomainViolation, NonSmooth) as exc:
        return f"rate function not evaluable on [0, {r_max}]: {exc}"
    if abs(vals[0]) > 1e-12:
        return f"rate function must vanish at 0, got {vals[0]}"
    if np.any(vals > rs + 1e-9 * (1.0 + rs)):
        i = int(np.argmax(vals - rs))
        return f"rate function exceeds identity at r={rs[i]}: {vals[i]}"
    if np.any(np.diff(vals) <= 0.0):
        return "rate function is not strictly increasing on the sampled range"
    return None
