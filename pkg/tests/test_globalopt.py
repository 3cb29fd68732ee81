import math

import numpy as np
import pytest

import dtcbf
from dtcbf import expressions as E
from dtcbf.globalopt import (
    BUDGET,
    CONVERGED,
    INFEASIBLE,
    abb_maximize,
    abb_minimize,
    grid_oracle,
)
from dtcbf.intervals import BoxN
from tests.conftest import random_box, random_smooth_expr

u1, u2 = E.var("u", 0), E.var("u", 1)
x1 = E.var("x", 0)


class TestExamples:
    def test_linear_maximization_hits_corner(self):
        box = BoxN.from_bounds([(-1.5, 1.5), (-1.5, 1.5)])
        r = abb_maximize(u1 + u2, None, box, 1e-6, kind="u")
        assert r.status == CONVERGED
        assert np.allclose(r.minimizer, [1.5, 1.5], atol=1e-6)
        assert r.lower_bound <= 3.0 <= r.upper_bound + 1e-12

    def test_smooth_unique_minimum(self):
        box = BoxN.from_bounds([(-1, 1)])
        r = abb_minimize((u1 - 0.3) ** 2, None, box, 1e-6, kind="u")
        assert r.status == CONVERGED
        assert r.upper_bound <= 1e-6
        assert abs(r.minimizer[0] - 0.3) <= 1e-3

    def test_constrained_example(self):
        # min x^2 subject to 0.25 - x <= 0 over [0, 1]: optimum 0.0625
        box = BoxN.from_bounds([(0, 1)])
        r = abb_minimize(x1**2, 0.25 - x1, box, 1e-8)
        assert r.status == CONVERGED
        assert r.upper_bound == pytest.approx(0.0625, abs=1e-6)
        assert r.lower_bound <= 0.0625 <= r.upper_bound + 1e-12

    def test_infeasible_certification(self):
        box = BoxN.from_bounds([(-1, 1)])
        r = abb_minimize(x1, x1**2 + 1.0, box, 1e-6)
        assert r.status == INFEASIBLE
        assert r.minimizer is None

    def test_budget_returns_valid_bounds(self):
        rng = np.random.default_rng(5)
        e = random_smooth_expr(rng, 2, depth=4)
        box = random_box(rng, 2, span=2.5)
        r = abb_minimize(e, None, box, 1e-12, budget=3)
        assert r.status in (BUDGET, CONVERGED)
        oracle = grid_oracle(e, None, box, 60)
        assert r.lower_bound <= oracle + 1e-9
        if r.minimizer is not None:
            assert r.upper_bound >= oracle - 1e-9


class TestGridOracle:
    def test_simple(self):
        box = BoxN.from_bounds([(-1, 1)])
        assert grid_oracle(x1**2, None, box, 3) == 0.0

    def test_corner(self):
        box = BoxN.from_bounds([(0, 1), (0, 1)])
        e = E.var("x", 0) * E.var("x", 1)
        assert grid_oracle(e, None, box, 11) == 0.0

    def test_constraint_filters(self):
        box = BoxN.from_bounds([(-1, 1)])
        assert grid_oracle(x1, x1**2 + 1.0, box, 11) == math.inf
        assert grid_oracle(x1, -x1, box, 11) == 0.0

    def test_resolution_validation(self):
        with pytest.raises(ValueError):
            grid_oracle(x1, None, BoxN.from_bounds([(0, 1)]), 1)


class TestProperties:
    @pytest.mark.parametrize("seed", range(15))
    def test_sandwich_and_oracle_consistency(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 3))
        e = random_smooth_expr(rng, n, depth=3)
        box = random_box(rng, n, span=2.0)
        r = abb_minimize(e, None, box, 1e-6, budget=4000, record_history=True)
        assert r.status == CONVERGED
        # bounds sandwich the truth and the history is monotone
        oracle = grid_oracle(e, None, box, 300 if n == 1 else 64)
        assert r.lower_bound <= oracle + 1e-9
        assert r.upper_bound <= oracle + 1e-6  # incumbent at least as good as the grid
        assert r.upper_bound - r.lower_bound <= 1e-6 + 1e-12
        lbs = [lo for lo, _ in r.history]
        ubs = [ub for _, ub in r.history]
        assert all(a <= b + 1e-12 for a, b in zip(lbs, lbs[1:]) if math.isfinite(a))
        assert all(a >= b - 1e-12 for a, b in zip(ubs, ubs[1:]) if math.isfinite(a))
        assert all(lo <= ub + 1e-12 for lo, ub in r.history if math.isfinite(lo) and math.isfinite(ub))

    @pytest.mark.parametrize("seed", range(8))
    def test_constrained_oracle_consistency(self, seed):
        rng = np.random.default_rng(400 + seed)
        n = int(rng.integers(1, 3))
        f = random_smooth_expr(rng, n, depth=2)
        g = random_smooth_expr(rng, n, depth=2)
        box = random_box(rng, n, span=1.5)
        r = abb_minimize(f, g, box, 1e-6, eps_feas=1e-9, budget=6000)
        oracle = grid_oracle(f, g, box, 200 if n == 1 else 50)
        if r.status == INFEASIBLE:
            assert oracle == math.inf
        elif r.status == CONVERGED:
            assert r.lower_bound <= oracle + 1e-6

    def test_determinism(self):
        rng = np.random.default_rng(77)
        e = random_smooth_expr(rng, 2, depth=4)
        box = random_box(rng, 2, span=2.0)
        r1 = abb_minimize(e, None, box, 1e-7, record_history=True)
        r2 = abb_minimize(e, None, box, 1e-7, record_history=True)
        assert r1.history == r2.history
        assert np.array_equal(r1.minimizer, r2.minimizer)
        assert r1.iterations == r2.iterations

    def test_env_binding(self):
        # minimize over u with the state pinned through env
        e = (u1 - x1) ** 2
        box = BoxN.from_bounds([(-2, 2)])
        r = abb_minimize(e, None, box, 1e-8, kind="u", env={"x": (0.7,)})
        assert abs(r.minimizer[0] - 0.7) <= 1e-3


class TestReferenceMarginMinimization:
    def test_linear2d_margin_certified_min(self):
        """The known-policy margin minimum for the linear2d case study:
        certified bounds must agree with a dense grid oracle."""
        b = dtcbf.builtin("linear2d")
        from dtcbf.verifier import margin_expr_known

        marg = margin_expr_known(b.problem, b.candidate)
        nh = E.neg(b.candidate.h)
        r = abb_minimize(marg, nh, b.problem.search_box, 1e-6, eps_feas=1e-12, budget=20000)
        assert r.status == CONVERGED
        assert r.upper_bound - r.lower_bound <= 1e-6 + 1e-12
        oracle = grid_oracle(marg, nh, b.problem.search_box, 400)
        assert r.lower_bound <= oracle + 1e-6
        # certified minimum is attained on the candidate-set boundary
        hval = E.evaluate(b.candidate.h, {"x": list(r.minimizer)})
        assert hval >= -1e-12
