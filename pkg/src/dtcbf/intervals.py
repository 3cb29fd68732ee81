"""Closed finite intervals and n-rectangle boxes.

All branch-and-bound loops in the toolkit work over these types: boxes
are subdivided with a scaled-longest-side rule, and interval arithmetic
supplies rigorous enclosures for values and Hessian entries of symbolic
expressions.

Enclosures use exact real-arithmetic formulas without directed rounding;
an optional inflation factor can widen results to absorb floating-point
slack (default 0, see `inflate`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateBox, DomainViolation

__all__ = [
    "Interval",
    "BoxN",
    "box_center",
    "box_diagonal_sq",
    "bisect_scaled_longest_side",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "pow_int",
    "exp",
    "log",
    "sqrt",
    "sin",
    "cos",
    "tan",
    "absolute",
]

_TWO_PI = 2.0 * math.pi
_HALF_PI = 0.5 * math.pi


@dataclass(frozen=True, slots=True)
class Interval:
    """Closed interval [lo, hi] with finite endpoints, lo <= hi."""

    lo: float
    hi: float

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ValueError(f"interval endpoints must be finite, got [{self.lo}, {self.hi}]")
        if self.lo > self.hi:
            raise ValueError(f"interval requires lo <= hi, got [{self.lo}, {self.hi}]")

    @staticmethod
    def point(v: float) -> "Interval":
        v = float(v)
        return Interval(v, v)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, v: float, tol: float = 0.0) -> bool:
        return self.lo - tol <= v <= self.hi + tol

    def contains_zero(self) -> bool:
        return self.lo <= 0.0 <= self.hi

    def mag(self) -> float:
        """max |v| over the interval."""
        return max(abs(self.lo), abs(self.hi))

    def inflate(self, factor: float) -> "Interval":
        """Widen symmetrically by factor * (1 + mag)."""
        if factor == 0.0:
            return self
        pad = factor * (1.0 + self.mag())
        return Interval(self.lo - pad, self.hi + pad)

    # -- operator sugar used by the interval evaluators -------------------

    def __add__(self, other):
        return add(self, _coerce(other))

    def __radd__(self, other):
        return add(_coerce(other), self)

    def __sub__(self, other):
        return sub(self, _coerce(other))

    def __rsub__(self, other):
        return sub(_coerce(other), self)

    def __mul__(self, other):
        return mul(self, _coerce(other))

    def __rmul__(self, other):
        return mul(_coerce(other), self)

    def __truediv__(self, other):
        return div(self, _coerce(other))

    def __rtruediv__(self, other):
        return div(_coerce(other), self)

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __repr__(self):
        return f"[{self.lo}, {self.hi}]"


def _coerce(v) -> Interval:
    if isinstance(v, Interval):
        return v
    return Interval.point(float(v))


ZERO = Interval(0.0, 0.0)
ONE = Interval(1.0, 1.0)


def add(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo + b.lo, a.hi + b.hi)


def sub(a: Interval, b: Interval) -> Interval:
    return Interval(a.lo - b.hi, a.hi - b.lo)


def neg(a: Interval) -> Interval:
    return Interval(-a.hi, -a.lo)


def mul(a: Interval, b: Interval) -> Interval:
    p1 = a.lo * b.lo
    p2 = a.lo * b.hi
    p3 = a.hi * b.lo
    p4 = a.hi * b.hi
    return Interval(min(p1, p2, p3, p4), max(p1, p2, p3, p4))


def div(a: Interval, b: Interval) -> Interval:
    if b.contains_zero():
        raise DomainViolation(f"division by interval containing zero: {b}")
    q1 = a.lo / b.lo
    q2 = a.lo / b.hi
    q3 = a.hi / b.lo
    q4 = a.hi / b.hi
    return Interval(min(q1, q2, q3, q4), max(q1, q2, q3, q4))


def pow_int(a: Interval, p: int) -> Interval:
    if p == 0:
        return ONE
    if p < 0:
        if a.contains_zero():
            raise DomainViolation(f"negative power of interval containing zero: {a}^{p}")
        return div(ONE, pow_int(a, -p))
    if p == 1:
        return a
    lo_p = a.lo**p
    hi_p = a.hi**p
    if p % 2 == 1:
        return Interval(lo_p, hi_p)
    # even power
    if a.lo >= 0.0:
        return Interval(lo_p, hi_p)
    if a.hi <= 0.0:
        return Interval(hi_p, lo_p)
    return Interval(0.0, max(lo_p, hi_p))


def exp(a: Interval) -> Interval:
    return Interval(math.exp(a.lo), math.exp(a.hi))


def log(a: Interval) -> Interval:
    if a.lo <= 0.0:
        raise DomainViolation(f"log of interval with non-positive part: {a}")
    return Interval(math.log(a.lo), math.log(a.hi))


def sqrt(a: Interval) -> Interval:
    if a.lo < 0.0:
        raise DomainViolation(f"sqrt of interval with negative part: {a}")
    return Interval(math.sqrt(a.lo), math.sqrt(a.hi))


def _contains_phase(a: Interval, phase: float) -> bool:
    """Does a contain any point phase + 2*pi*k, k integer?"""
    k = math.ceil((a.lo - phase) / _TWO_PI)
    return phase + _TWO_PI * k <= a.hi


def sin(a: Interval) -> Interval:
    if a.width >= _TWO_PI:
        return Interval(-1.0, 1.0)
    s_lo = math.sin(a.lo)
    s_hi = math.sin(a.hi)
    hi = 1.0 if _contains_phase(a, _HALF_PI) else max(s_lo, s_hi)
    lo = -1.0 if _contains_phase(a, -_HALF_PI) else min(s_lo, s_hi)
    return Interval(lo, hi)


def cos(a: Interval) -> Interval:
    if a.width >= _TWO_PI:
        return Interval(-1.0, 1.0)
    c_lo = math.cos(a.lo)
    c_hi = math.cos(a.hi)
    hi = 1.0 if _contains_phase(a, 0.0) else max(c_lo, c_hi)
    lo = -1.0 if _contains_phase(a, math.pi) else min(c_lo, c_hi)
    return Interval(lo, hi)


def tan(a: Interval) -> Interval:
    # tan is increasing on each branch (-pi/2 + k*pi, pi/2 + k*pi); the
    # interval must stay within one branch.
    k_lo = math.floor((a.lo + _HALF_PI) / math.pi)
    k_hi = math.floor((a.hi + _HALF_PI) / math.pi)
    if k_lo != k_hi:
        raise DomainViolation(f"tan over interval crossing a pole: {a}")
    return Interval(math.tan(a.lo), math.tan(a.hi))


def absolute(a: Interval) -> Interval:
    if a.lo >= 0.0:
        return a
    if a.hi <= 0.0:
        return Interval(-a.hi, -a.lo)
    return Interval(0.0, max(-a.lo, a.hi))


@dataclass(frozen=True, slots=True)
class BoxN:
    """n-rectangle set: a tuple of closed finite intervals, n >= 1."""

    dims: tuple[Interval, ...]

    def __post_init__(self):
        if len(self.dims) < 1:
            raise ValueError("BoxN requires at least one dimension")
        for d in self.dims:
            if not isinstance(d, Interval):
                raise TypeError("BoxN dims must be Interval instances")

    @staticmethod
    def from_bounds(bounds) -> "BoxN":
        """Build from an iterable of (lo, hi) pairs."""
        return BoxN(tuple(Interval(float(lo), float(hi)) for lo, hi in bounds))

    @property
    def n(self) -> int:
        return len(self.dims)

    def lo_array(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims], dtype=float)

    def hi_array(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims], dtype=float)

    def widths(self) -> np.ndarray:
        return np.array([d.width for d in self.dims], dtype=float)

    def volume(self) -> float:
        v = 1.0
        for d in self.dims:
            v *= d.width
        return v

    def contains(self, point, tol: float = 0.0) -> bool:
        if len(point) != self.n:
            return False
        return all(d.contains(float(p), tol) for d, p in zip(self.dims, point))

    def replace_dim(self, j: int, iv: Interval) -> "BoxN":
        dims = list(self.dims)
        dims[j] = iv
        return BoxN(tuple(dims))

    def bounds(self) -> list[tuple[float, float]]:
        return [(d.lo, d.hi) for d in self.dims]

    def __repr__(self):
        return "Box(" + " x ".join(repr(d) for d in self.dims) + ")"


def box_center(b: BoxN) -> np.ndarray:
    """Center point: per-dimension midpoint."""
    return np.array([d.mid for d in b.dims], dtype=float)


def box_diagonal_sq(b: BoxN) -> float:
    """Squared diagonal: sum of squared widths."""
    return float(sum(d.width**2 for d in b.dims))


def split_dimension(b: BoxN, root: BoxN) -> int:
    """Dimension to bisect: largest width relative to the root box width
    (ties broken by smallest index).  Root dimensions with zero width are
    never selected unless all widths of b are zero."""
    if b.n != root.n:
        raise DegenerateBox("box and root dimension mismatch")
    best_j = -1
    best_ratio = -1.0
    for j, (d, rd) in enumerate(zip(b.dims, root.dims)):
        if d.width == 0.0:
            continue
        ref = rd.width if rd.width > 0.0 else 1.0
        ratio = d.width / ref
        if ratio > best_ratio + 0.0:
            best_ratio = ratio
            best_j = j
    if best_j < 0:
        raise DegenerateBox(f"cannot bisect a zero-width box: {b}")
    return best_j


def bisect_scaled_longest_side(b: BoxN, root: BoxN) -> tuple[BoxN, BoxN]:
    """Split b at the midpoint of its scaled-longest side.

    The two children partition b and intersect only on the splitting
    hyperplane.  Raises DegenerateBox when every width of b is zero.
    """
    left, right, _, _ = bisect_detailed(b, root)
    return left, right


def bisect_detailed(b: BoxN, root: BoxN) -> tuple[BoxN, BoxN, int, float]:
    """As bisect_scaled_longest_side, also returning (dim, midpoint)."""
    j = split_dimension(b, root)
    d = b.dims[j]
    m = d.mid
    left = b.replace_dim(j, Interval(d.lo, m))
    right = b.replace_dim(j, Interval(m, d.hi))
    return left, right, j, m
