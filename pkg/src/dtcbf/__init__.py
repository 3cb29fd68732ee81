"""Verification and synthesis of discrete-time control barrier functions.

Branch-and-bound over quadratic-perturbation convex underestimators:
certified verification of candidate barriers (with known or unknown
control policies), global minimization, safe-subset certification,
coefficient synthesis by nested global optimization, and an online
safety-filter rollout.
"""

from .errors import (
    BudgetExceeded,
    DegenerateBox,
    DegenerateEllipse,
    DimensionMismatch,
    DomainViolation,
    DTCBFError,
    FilterInfeasible,
    IterationLimit,
    NonSmooth,
    ParseError,
    SchemaError,
)
from .intervals import BoxN, Interval, bisect_scaled_longest_side, box_center, box_diagonal_sq
from .expressions import Expr, ExprVec
from .parsing import VarContext, parse_formula
from .underestimator import AlphaVector, Underestimator, build, compute_alpha, max_separation
from .convex import RelaxationResult, solve
from .globalopt import GlobalResult, abb_maximize, abb_minimize, grid_oracle
from .verifier import (
    Candidate,
    PiecewiseConstantFriend,
    SafeSubsetResult,
    SubdomainRecord,
    VerificationOutcome,
    VerifierConfig,
    check_safe_subset,
    dtcbf_margin,
    gamma_identity_fallback,
    verify_known,
    verify_unknown,
)
from .synthesis import (
    Certificate,
    SynthesisOutcome,
    SynthesisSpec,
    ellipse_geometry,
    inner_certify,
    superellipsoid_inner_set,
    synthesize,
)
from .problems import (
    Problem,
    ProblemBundle,
    Trajectory,
    builtin,
    builtin_names,
    load_problem,
    loads_problem,
    rollout_filter,
)

__version__ = "0.1.0"
