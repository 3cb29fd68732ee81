"""Shared helpers: seeded random smooth expressions and boxes."""

from __future__ import annotations

import numpy as np
import pytest

from dtcbf.expressions import Expr, call, const, pow_int, var
from dtcbf.intervals import BoxN


def random_box(rng: np.random.Generator, n: int, span: float = 3.0, min_w: float = 0.05) -> BoxN:
    lo = rng.uniform(-span, span - min_w, size=n)
    hi = lo + rng.uniform(min_w, span, size=n)
    return BoxN.from_bounds(zip(lo, hi))


def random_smooth_expr(rng: np.random.Generator, n: int, depth: int = 3, kind: str = "x") -> Expr:
    """Random everywhere-smooth expression over n variables: polynomials
    with occasional sin/cos/exp wrappers (no div/log/sqrt/abs)."""

    def leaf() -> Expr:
        if rng.random() < 0.75:
            return var(kind, int(rng.integers(0, n)))
        return const(float(rng.uniform(-2.0, 2.0)))

    def rec(d: int) -> Expr:
        if d <= 0:
            return leaf()
        roll = rng.random()
        if roll < 0.30:
            return rec(d - 1) + rec(d - 1)
        if roll < 0.50:
            return rec(d - 1) - rec(d - 1)
        if roll < 0.72:
            return rec(d - 1) * rec(d - 1)
        if roll < 0.82:
            return pow_int(rec(d - 1), int(rng.integers(2, 4)))
        fn = ("sin", "cos", "exp")[int(rng.integers(0, 3))]
        # keep exp arguments small to avoid overflow in interval bounds
        inner = rec(d - 1)
        if fn == "exp":
            inner = const(0.1) * inner
        return call(fn, inner)

    return rec(depth)


def sample_in_box(rng: np.random.Generator, box: BoxN, count: int) -> np.ndarray:
    return rng.uniform(box.lo_array(), box.hi_array(), size=(count, box.n))


@pytest.fixture
def rng():
    return np.random.default_rng(20240811)
