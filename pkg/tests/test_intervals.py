import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtcbf import intervals as iv
from dtcbf.errors import DegenerateBox, DomainViolation
from dtcbf.intervals import (
    BoxN,
    Interval,
    bisect_scaled_longest_side,
    box_center,
    box_diagonal_sq,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


def ivl(lo, hi):
    return Interval(float(min(lo, hi)), float(max(lo, hi)))


intervals = st.builds(ivl, finite, finite)
small_intervals = st.builds(ivl, st.floats(-10, 10), st.floats(-10, 10))


class TestIntervalBasics:
    def test_ordering_enforced(self):
        with pytest.raises(ValueError):
            Interval(1.0, 0.0)

    def test_finite_enforced(self):
        with pytest.raises(ValueError):
            Interval(0.0, math.inf)

    def test_point(self):
        p = Interval.point(3.5)
        assert p.lo == p.hi == 3.5
        assert p.width == 0.0

    def test_add(self):
        assert iv.add(Interval(1, 2), Interval(3, 4)) == Interval(4, 6)

    def test_mul_mixed_signs(self):
        # corner enumeration oracle: products of {-1,2} x {3,4}
        corners = [a * b for a in (-1, 2) for b in (3, 4)]
        got = iv.mul(Interval(-1, 2), Interval(3, 4))
        assert got == Interval(min(corners), max(corners)) == Interval(-4, 8)

    def test_div_through_zero_rejected(self):
        with pytest.raises(DomainViolation):
            iv.div(Interval(1, 2), Interval(-1, 1))

    def test_log_sqrt_domains(self):
        with pytest.raises(DomainViolation):
            iv.log(Interval(0, 1))
        with pytest.raises(DomainViolation):
            iv.sqrt(Interval(-0.1, 1))
        assert iv.sqrt(Interval(0, 4)) == Interval(0, 2)

    def test_sin_quadrants(self):
        # monotonicity analysis on quadrants: peak at pi/2 inside
        got = iv.sin(Interval(0.0, math.pi))
        assert got.lo == 0.0
        assert got.hi == 1.0
        # dense-sample cross-check
        xs = np.linspace(0, math.pi, 10001)
        assert np.all(np.sin(xs) >= got.lo - 1e-12)
        assert np.all(np.sin(xs) <= got.hi + 1e-12)

    def test_cos_contains_extrema(self):
        got = iv.cos(Interval(-0.5, 0.5))
        assert got.hi == 1.0
        assert got.lo == pytest.approx(math.cos(0.5))

    def test_tan_pole_rejected(self):
        with pytest.raises(DomainViolation):
            iv.tan(Interval(1.0, 2.0))  # pole at pi/2
        t = iv.tan(Interval(-0.5, 0.5))
        assert t.lo == pytest.approx(math.tan(-0.5))

    def test_pow_even_straddling(self):
        assert iv.pow_int(Interval(-1, 2), 2) == Interval(0, 4)

    def test_pow_negative_needs_sign(self):
        with pytest.raises(DomainViolation):
            iv.pow_int(Interval(-1, 1), -1)
        assert iv.pow_int(Interval(2, 4), -1) == Interval(0.25, 0.5)

    def test_abs(self):
        assert iv.absolute(Interval(-3, 1)) == Interval(0, 3)

    def test_inflate(self):
        a = Interval(1.0, 2.0).inflate(1e-3)
        assert a.lo < 1.0 < 2.0 < a.hi


_UNARY = [
    (iv.neg, np.negative, None),
    (iv.exp, np.exp, None),
    (iv.sin, np.sin, None),
    (iv.cos, np.cos, None),
    (iv.absolute, np.abs, None),
]


class TestInclusion:
    """Sampled inclusion: op(points in A) subset of op(A) (10^4 pairs per
    operator via vectorized sampling)."""

    @pytest.mark.parametrize("seed", range(20))
    def test_binary_ops_inclusion(self, seed):
        rng = np.random.default_rng(seed)
        for _ in range(25):
            a = ivl(*sorted(rng.uniform(-20, 20, 2)))
            b = ivl(*sorted(rng.uniform(-20, 20, 2)))
            xs = rng.uniform(a.lo, a.hi, 20)
            ys = rng.uniform(b.lo, b.hi, 20)
            for op, np_op in ((iv.add, np.add), (iv.sub, np.subtract), (iv.mul, np.multiply)):
                r = op(a, b)
                vals = np_op(xs[:, None], ys[None, :])
                tol = 1e-9 * (1.0 + np.max(np.abs(vals)))
                assert np.all(vals >= r.lo - tol) and np.all(vals <= r.hi + tol)
            if not b.contains_zero():
                r = iv.div(a, b)
                vals = xs[:, None] / ys[None, :]
                tol = 1e-9 * (1.0 + np.max(np.abs(vals)))
                assert np.all(vals >= r.lo - tol) and np.all(vals <= r.hi + tol)

    @pytest.mark.parametrize("seed", range(10))
    def test_unary_ops_inclusion(self, seed):
        rng = np.random.default_rng(1000 + seed)
        for _ in range(50):
            a = ivl(*sorted(rng.uniform(-8, 8, 2)))
            xs = rng.uniform(a.lo, a.hi, 100)
            for op, np_op, _ in _UNARY:
                r = op(a)
                vals = np_op(xs)
                tol = 1e-9 * (1.0 + np.max(np.abs(vals)))
                assert np.all(vals >= r.lo - tol) and np.all(vals <= r.hi + tol)
            for p in (2, 3, 4, 5):
                r = iv.pow_int(a, p)
                vals = xs.astype(float) ** p
                tol = 1e-9 * (1.0 + np.max(np.abs(vals)))
                assert np.all(vals >= r.lo - tol) and np.all(vals <= r.hi + tol)

    @given(small_intervals, small_intervals, st.floats(0, 1), st.floats(0, 1))
    @settings(max_examples=200, deadline=None)
    def test_hypothesis_mul_inclusion(self, a, b, ta, tb):
        x = a.lo + ta * (a.hi - a.lo)
        y = b.lo + tb * (b.hi - b.lo)
        r = iv.mul(a, b)
        tol = 1e-9 * (1.0 + abs(x * y))
        assert r.lo - tol <= x * y <= r.hi + tol


class TestBox:
    def test_center_examples(self):
        assert np.allclose(box_center(BoxN.from_bounds([(0, 2), (-1, 1)])), [1.0, 0.0])
        assert np.allclose(box_center(BoxN.from_bounds([(3.5, 3.5)])), [3.5])
        assert np.allclose(
            box_center(BoxN.from_bounds([(-1.75, 1.75), (-1.75, 1.75)])), [0.0, 0.0]
        )

    def test_diagonal_examples(self):
        assert box_diagonal_sq(BoxN.from_bounds([(0, 1), (0, 1)])) == 2.0
        assert box_diagonal_sq(BoxN.from_bounds([(0, 3), (0, 4)])) == 25.0
        assert box_diagonal_sq(BoxN.from_bounds([(2, 2), (5, 5)])) == 0.0

    def test_bisect_relative_widths(self):
        root = BoxN.from_bounds([(0, 1), (0, 1)])
        b = BoxN.from_bounds([(0, 1), (0, 0.5)])
        left, right = bisect_scaled_longest_side(b, root)
        # relative widths 1 vs 0.5: split the first dimension at 0.5
        assert left.dims[0] == Interval(0, 0.5) and right.dims[0] == Interval(0.5, 1)
        assert left.dims[1] == right.dims[1] == Interval(0, 0.5)

    def test_bisect_scaling_by_root(self):
        root = BoxN.from_bounds([(0, 1), (0, 2)])
        b = BoxN.from_bounds([(0, 0.5), (0, 0.5)])
        left, right = bisect_scaled_longest_side(b, root)
        # relative widths 0.5 vs 0.25: still the first dimension, at 0.25
        assert left.dims[0] == Interval(0, 0.25) and right.dims[0] == Interval(0.25, 0.5)

    def test_bisect_tie_break_lowest_index(self):
        root = BoxN.from_bounds([(-1.75, 1.75), (-1.75, 1.75)])
        left, right = bisect_scaled_longest_side(root, root)
        assert left.dims[0] == Interval(-1.75, 0.0)
        assert right.dims[0] == Interval(0.0, 1.75)
        assert left.dims[1] == root.dims[1]

    def test_bisect_degenerate(self):
        root = BoxN.from_bounds([(0, 1)])
        with pytest.raises(DegenerateBox):
            bisect_scaled_longest_side(BoxN.from_bounds([(0.5, 0.5)]), root)

    @pytest.mark.parametrize("seed", range(25))
    def test_bisection_partitions(self, seed):
        # dyadic-grid endpoints make midpoint arithmetic exact
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 5))
        scale = 2.0 ** rng.integers(-3, 4)
        lo = rng.integers(-64, 63, n) * scale
        hi = lo + rng.integers(1, 64, n) * scale
        root = BoxN.from_bounds(zip(lo, hi))
        b = root
        for _ in range(12):
            left, right = bisect_scaled_longest_side(b, root)
            j = next(
                i for i in range(n) if left.dims[i] != b.dims[i] or right.dims[i] != b.dims[i]
            )
            # children partition the parent exactly in the split dimension
            assert left.dims[j].hi == right.dims[j].lo
            assert left.dims[j].lo == b.dims[j].lo and right.dims[j].hi == b.dims[j].hi
            assert left.dims[j].width + right.dims[j].width == b.dims[j].width
            # all other dimensions unchanged
            for i in range(n):
                if i != j:
                    assert left.dims[i] == b.dims[i] and right.dims[i] == b.dims[i]
            # diagonal strictly decreases when the split side had width
            assert box_diagonal_sq(left) < box_diagonal_sq(b)
            assert box_diagonal_sq(right) < box_diagonal_sq(b)
            b = left if rng.random() < 0.5 else right
