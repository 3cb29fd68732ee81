import math

import numpy as np
import pytest

import dtcbf
from dtcbf.errors import DegenerateEllipse
from dtcbf.expressions import ExprVec, evaluate, gamma_linear, var
from dtcbf.intervals import BoxN, Interval
from dtcbf.problems import Problem
from dtcbf.synthesis import (
    FOUND,
    INFEASIBLE,
    SynthesisSpec,
    certificates_meet_targets,
    certificates_pass,
    concrete_candidate,
    ellipse_geometry,
    inner_certify,
    superellipsoid_inner_set,
    synthesize,
)
from dtcbf.verifier import VALID, dtcbf_margin

x1 = var("x", 0)
u1 = var("u", 0)
t1 = var("p", 0)


class TestEllipseGeometry:
    def test_unit_circle(self):
        g = ellipse_geometry((1.0, 0.0, 1.0))
        assert g["L"] == -4.0
        assert g["a"] == pytest.approx(1.0)
        assert g["b"] == pytest.approx(1.0)
        assert g["area"] == pytest.approx(math.pi)

    def test_reference_coefficients(self):
        g = ellipse_geometry((0.626, 0.537, 0.580))
        assert g["L"] == pytest.approx(-1.163951)
        assert g["area"] == pytest.approx(5.8239, abs=2e-4)
        assert g["a"] ** 2 <= 3.0
        assert g["b"] ** 2 <= 3.0

    def test_degenerate(self):
        with pytest.raises(DegenerateEllipse):
            ellipse_geometry((1.0, 2.0, 1.0))

    def test_positive_diagonal_required(self):
        with pytest.raises(ValueError):
            ellipse_geometry((-1.0, 0.0, 1.0))

    @pytest.mark.parametrize("seed", range(10))
    def test_area_discriminant_identity(self, seed):
        rng = np.random.default_rng(seed)
        while True:
            t = rng.uniform((0.1, -1.5, 0.1), (1.5, 1.5, 1.5))
            if t[1] ** 2 - 4 * t[0] * t[2] < -1e-3:
                break
        g = ellipse_geometry(t)
        assert g["area"] * math.sqrt(-g["L"]) == pytest.approx(2 * math.pi, rel=1e-12)


class TestSuperEllipsoid:
    def test_interval_recovered_exactly(self):
        e = superellipsoid_inner_set(BoxN.from_bounds([(-1, 1)]), 2)
        assert evaluate(e, {"u": [1.0]}) == pytest.approx(1.0)
        assert evaluate(e, {"u": [0.0]}) == 0.0

    def test_corner_excluded_for_all_p(self):
        box = BoxN.from_bounds([(-1, 1), (-1, 1)])
        for p in (2, 4, 8):
            e = superellipsoid_inner_set(box, p)
            assert evaluate(e, {"u": [1.0, 1.0]}) == pytest.approx(2.0)

    def test_sublevel_inside_box(self, rng):
        box = BoxN.from_bounds([(-2, 1), (0.5, 3)])
        e = superellipsoid_inner_set(box, 4)
        hits = 0
        while hits < 2000:
            u = rng.uniform([-3, -1], [2, 5])
            if evaluate(e, {"u": list(u)}) <= 1.0:
                assert box.contains(u, tol=1e-12)
                hits += 1

    def test_monotone_in_p(self, rng):
        box = BoxN.from_bounds([(-1, 1), (-1, 1)])
        e2 = superellipsoid_inner_set(box, 2)
        e4 = superellipsoid_inner_set(box, 4)
        for _ in range(2000):
            u = list(rng.uniform(-1, 1, 2))
            if evaluate(e2, {"u": u}) <= 1.0:
                assert evaluate(e4, {"u": u}) <= 1.0 + 1e-12

    def test_odd_p_rejected(self):
        with pytest.raises(ValueError):
            superellipsoid_inner_set(BoxN.from_bounds([(-1, 1)]), 3)


def tiny_spec(admissibility="symmetric_square", safe_mode="direct", gamma_c=None):
    """1-state/1-input synthesis problem with an analytically known answer:
    x+ = 0.5 x + 0.1 u, h = 1 - t1 x^2, pi = m1 x.  Any t1 in [0.25, 2] and
    small m1 works; maximizing the set means minimizing t1."""
    prob = Problem(
        name="tiny",
        n=1,
        m=1,
        f=ExprVec((0.5 * x1 + 0.1 * u1,)),
        u_box=BoxN.from_bounds([(-1, 1)]),
        s=4.0 - x1**2,
        search_box=BoxN.from_bounds([(-2.2, 2.2)]),
        constants={},
    )
    return SynthesisSpec(
        problem=prob,
        h_template=1.0 - t1 * x1**2,
        pi_templates=ExprVec((var("p", 1) * x1,)),
        theta_box=BoxN.from_bounds([(0.25, 2.0)]),
        mu_box=BoxN.from_bounds([(-0.4, 0.4)]),
        gamma=gamma_linear(0.5),
        outer_objective=t1,
        outer_param_constraints=(),
        admissibility_mode=admissibility,
        p_exponent=4,
        safe_subset_mode=safe_mode,
        eps_f=1e-3,
        eps_F=0.05,
        gamma_c_box=gamma_c,
    )


class TestInnerCertify:
    def test_tiny_feasible_point(self):
        spec = tiny_spec()
        certs = inner_certify(spec, theta=[1.0], mu=[0.0])
        assert certificates_pass(certs)
        assert certificates_meet_targets(certs)
        names = {c.name for c in certs}
        assert "margin" in names and "admissibility_sq_u1" in names

    def test_inadmissible_policy_fails(self):
        # |pi| = 5|x| exceeds the input box on the candidate set
        spec = tiny_spec()
        big = SynthesisSpec(**{**spec.__dict__, "mu_box": BoxN.from_bounds([(-6, 6)])})
        certs = inner_certify(big, theta=[1.0], mu=[5.0])
        adm = [c for c in certs if c.name.startswith("admissibility")]
        assert adm and not all(c.passed for c in adm)

    def test_per_component_mode(self):
        spec = tiny_spec(admissibility="per_component")
        certs = inner_certify(spec, theta=[1.0], mu=[0.1])
        names = {c.name for c in certs}
        assert "admissibility_lo_u1" in names and "admissibility_hi_u1" in names
        assert certificates_pass(certs)

    def test_super_ellipsoid_mode(self):
        spec = tiny_spec(admissibility="super_ellipsoid")
        certs = inner_certify(spec, theta=[1.0], mu=[0.1])
        names = {c.name for c in certs}
        assert "admissibility_superellipsoid" in names
        assert certificates_pass(certs)

    def test_safe_subset_inner_bb(self):
        spec = tiny_spec(safe_mode="inner_bb")
        certs = inner_certify(spec, theta=[1.0], mu=[0.0])
        names = {c.name for c in certs}
        assert "safe_subset" in names
        assert certificates_pass(certs)

    def test_unsafe_candidate_fails_safe_subset(self):
        # shrink the safe set so the candidate set pokes out
        spec = tiny_spec(safe_mode="inner_bb")
        prob = spec.problem
        unsafe_prob = Problem(
            prob.name, prob.n, prob.m, prob.f, prob.u_box,
            0.25 - x1**2, prob.search_box, prob.constants,
        )
        spec2 = SynthesisSpec(**{**spec.__dict__, "problem": unsafe_prob})
        certs = inner_certify(spec2, theta=[1.0], mu=[0.0])
        safe = [c for c in certs if c.name == "safe_subset"]
        assert safe and not safe[0].passed

    def test_margin_fails_for_expanding_system(self):
        spec = tiny_spec()
        expanding = Problem(
            "exp", 1, 1, ExprVec((2.0 * x1 + 0.1 * u1,)),
            spec.problem.u_box, spec.problem.s, spec.problem.search_box, {},
        )
        spec2 = SynthesisSpec(**{**spec.__dict__, "problem": expanding})
        certs = inner_certify(spec2, theta=[1.0], mu=[-0.2])
        margin = [c for c in certs if c.name == "margin"]
        assert margin and not margin[0].passed


class TestSynthesizeTiny:
    def test_found_and_crosschecked(self):
        spec = tiny_spec()
        out = synthesize(spec, budget_nodes=4000, param_floor=1e-3)
        assert out.status == FOUND
        assert out.crosscheck is not None and out.crosscheck.verdict == VALID
        # objective = t1 minimized toward its feasible floor
        assert out.theta[0] <= 0.5
        assert certificates_pass(list(out.certificates))
        cand = concrete_candidate(spec, out.theta, out.mu)
        m = dtcbf_margin(spec.problem, cand, [0.3], [float(out.mu[0]) * 0.3])
        assert m > 0.0

    def test_outer_value_matches_objective(self):
        spec = tiny_spec()
        out = synthesize(spec, budget_nodes=4000)
        assert out.outer_value == pytest.approx(out.theta[0])

    def test_infeasible_contradictory_constraints(self):
        spec = tiny_spec()
        # t1 <= 0.2 contradicts the coefficient box [0.25, 2]
        spec2 = SynthesisSpec(**{**spec.__dict__, "outer_param_constraints": (t1 - 0.2,)})
        out = synthesize(spec2, budget_nodes=2000)
        assert out.status == INFEASIBLE
        assert out.theta is None

    def test_budget_status(self):
        spec = tiny_spec()
        out = synthesize(spec, budget_nodes=1)
        assert out.status in (FOUND, "budget")

    def test_gamma_coefficient_synthesis(self):
        spec = tiny_spec(gamma_c=Interval(0.1, 1.0))
        out = synthesize(spec, budget_nodes=4000)
        assert out.status == FOUND
        assert out.gamma_c is not None and 0.1 <= out.gamma_c <= 1.0
        assert out.crosscheck.verdict == VALID

    def test_determinism(self):
        spec = tiny_spec()
        o1 = synthesize(spec, budget_nodes=3000)
        o2 = synthesize(spec, budget_nodes=3000)
        assert o1.theta == o2.theta and o1.mu == o2.mu
        assert o1.stats["iterations"] == o2.stats["iterations"]


class TestSpecValidation:
    def test_symmetric_square_requires_symmetric_box(self):
        spec = tiny_spec()
        prob = spec.problem
        asym = Problem(
            prob.name, prob.n, prob.m, prob.f,
            BoxN.from_bounds([(-1, 2)]), prob.s, prob.search_box, prob.constants,
        )
        with pytest.raises(ValueError, match="symmetric"):
            SynthesisSpec(**{**spec.__dict__, "problem": asym})

    def test_super_ellipsoid_needs_even_p(self):
        spec = tiny_spec()
        with pytest.raises(ValueError):
            SynthesisSpec(
                **{**spec.__dict__, "admissibility_mode": "super_ellipsoid", "p_exponent": 3}
            )

    def test_reference_point_passes_certificates(self):
        b = dtcbf.builtin("poly2d")
        certs = inner_certify(b.synthesis, (0.626, 0.537, 0.580), (-0.976, -1.0, -0.976, -1.0))
        assert certificates_pass(certs)
        margin = [c for c in certs if c.name == "margin"][0]
        # minimum barrier margin certified strictly positive
        assert margin.lower > 0.0
        assert margin.upper < 1.5e-3  # near the conservatism threshold
