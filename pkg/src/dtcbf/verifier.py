"""Branch-and-bound verification of candidate discrete-time control
barrier functions.

Two modes:

* known policy: per subdomain, the margin
      F(x) = h(f(x, pi(x))) - h(x) + gamma(h(x))
  is minimized over {x in box : -h(x) <= 0} through its convex
  relaxation; a non-negative certified relaxation value approves the
  subdomain, a certified infeasibility approves it as disjoint from the
  zero-superlevel set, and otherwise the subdomain is split or a
  counterexample is reported.

* unknown policy: per subdomain, a candidate input is computed for the
  subdomain center by globally maximizing the margin over the input box;
  fixing that input reduces to the known-policy subproblem.  Approvals
  assemble a piecewise-constant friend (one input per approved box).

Stopping criteria bound the maximum underestimator separation (and, in
unknown mode, the subdomain diagonal) so every run terminates; a
tolerance-stop reports a counterexample for the configured conservatism
after an independent numeric re-check.
"""

from __future__ import annotations

import logging
import time
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import convex
from .errors import BudgetExceeded, DomainViolation, IterationLimit, NonSmooth
from .expressions import (
    Expr,
    ExprVec,
    apply_gamma,
    evaluate,
    gamma_identity,
    interval_evaluate,
    neg,
    sub,
    substitute,
)
from .globalopt import abb_maximize
from .intervals import BoxN, bisect_detailed, box_center, box_diagonal_sq
from .underestimator import prepare

__all__ = [
    "Candidate",
    "VerifierConfig",
    "SubdomainRecord",
    "VerificationOutcome",
    "SafeSubsetResult",
    "PiecewiseConstantFriend",
    "dtcbf_margin",
    "margin_expr_known",
    "margin_expr_fixed_input",
    "margin_expr_in_inputs",
    "verify_known",
    "verify_unknown",
    "check_safe_subset",
    "gamma_identity_fallback",
]

log = logging.getLogger("dtcbf.verifier")

VALID = "valid"
FALSIFIED_EXACT = "falsified_exact"
FALSIFIED_TOLERANCE = "falsified_tolerance"

HOLDS = "holds"
VIOLATED = "violated"
VIOLATED_TOLERANCE = "violated_tolerance"

APPROVED_VALID = "approved_valid"
APPROVED_EMPTY = "approved_empty"
SPLIT = "split"
STOPPED = "stopped"
UNRESOLVED = "unresolved"


@dataclass(frozen=True)
class Candidate:
    """Barrier candidate: state-only h, rate function gamma (expression
    in one variable), and optionally a state-only control policy."""

    h: Expr
    gamma: Expr
    policy: ExprVec | None = None


@dataclass(frozen=True)
class VerifierConfig:
    eps_f: float = 1e-6
    eps_h: float = 1e-6
    eps_d: float = 1e-6
    relax_tol: float = 1e-7
    feas_tol: float = 1e-12
    input_opt_eps: float = 1e-8
    input_opt_budget: int = 4000
    max_iterations: int = 2_000_000
    max_seconds: float | None = None
    threads: int = 1
    alpha_safety: float = 1.0

    def __post_init__(self):
        for name in ("eps_f", "eps_h", "eps_d", "relax_tol", "input_opt_eps"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.alpha_safety < 1.0:
            raise ValueError("alpha_safety must be >= 1")


@dataclass
class SubdomainRecord:
    id: int
    parent: int | None
    box: BoxN
    status: str = UNRESOLVED
    assigned_input: tuple[float, ...] | None = None
    relaxation_value: float | None = None
    children: tuple[int, int] | None = None
    split_dim: int | None = None
    split_mid: float | None = None


@dataclass
class VerifierStats:
    mode: str
    iterations: int = 0
    wall_time: float = 0.0
    records: list[SubdomainRecord] = field(default_factory=list)

    def counts(self) -> dict[str, int]:
        out: dict[str, int] = {}
        for r in self.records:
            out[r.status] = out.get(r.status, 0) + 1
        return out


@dataclass(frozen=True)
class PiecewiseConstantFriend:
    """Piecewise-constant policy: one admissible input per approved box.
    Lookup descends the subdivision tree (shared faces go left)."""

    records: tuple[SubdomainRecord, ...]
    index: dict[int, int]

    @staticmethod
    def from_records(records: list[SubdomainRecord]) -> "PiecewiseConstantFriend":
        return PiecewiseConstantFriend(
            tuple(records), {r.id: i for i, r in enumerate(records)}
        )

    def locate(self, x) -> SubdomainRecord:
        rec = self.records[self.index[0]]
        while rec.status == SPLIT and rec.children is not None:
            left_id, right_id = rec.children
            if x[rec.split_dim] <= rec.split_mid:
                rec = self.records[self.index[left_id]]
            else:
                rec = self.records[self.index[right_id]]
        return rec

    def __call__(self, x) -> np.ndarray | None:
        rec = self.locate(x)
        if rec.status == APPROVED_VALID and rec.assigned_input is not None:
            return np.array(rec.assigned_input, dtype=float)
        return None

    def pairs(self) -> list[tuple[BoxN, tuple[float, ...]]]:
        return [
            (r.box, r.assigned_input)
            for r in self.records
            if r.status == APPROVED_VALID and r.assigned_input is not None
        ]


@dataclass(frozen=True)
class VerificationOutcome:
    verdict: str
    counterexample: np.ndarray | None
    friend: PiecewiseConstantFriend | None
    stats: VerifierStats


@dataclass(frozen=True)
class SafeSubsetResult:
    status: str
    point: np.ndarray | None
    stats: VerifierStats


# ---------------------------------------------------------------------------
# margin construction and evaluation
# ---------------------------------------------------------------------------


def margin_expr_known(problem, candidate: Candidate) -> Expr:
    """State-only margin with the policy substituted into the dynamics."""
    if candidate.policy is None:
        raise ValueError("known-policy margin requires a policy")
    pol = {("u", j): candidate.policy[j] for j in range(len(candidate.policy))}
    f_closed = [substitute(fi, pol) for fi in problem.f]
    nxt = {("x", i): f_closed[i] for i in range(len(f_closed))}
    h_next = substitute(candidate.h, nxt)
    return sub(h_next, sub(candidate.h, apply_gamma(candidate.gamma, candidate.h)))


def margin_expr_fixed_input(problem, candidate: Candidate, u_values) -> Expr:
    """State-only margin with the input pinned to constants."""
    fix = {("u", j): float(v) for j, v in enumerate(u_values)}
    f_fixed = [substitute(fi, fix) for fi in problem.f]
    nxt = {("x", i): f_fixed[i] for i in range(len(f_fixed))}
    h_next = substitute(candidate.h, nxt)
    return sub(h_next, sub(candidate.h, apply_gamma(candidate.gamma, candidate.h)))


def margin_expr_in_inputs(problem, candidate: Candidate, x_values) -> Expr:
    """Input-only margin at a fixed state (the inner maximization target)."""
    x_values = [float(v) for v in x_values]
    fix = {("x", i): v for i, v in enumerate(x_values)}
    f_fixed = [substitute(fi, fix) for fi in problem.f]
    nxt = {("x", i): f_fixed[i] for i in range(len(f_fixed))}
    h_next = substitute(candidate.h, nxt)
    hx = float(evaluate(candidate.h, {"x": x_values}))
    gx = float(evaluate(apply_gamma(candidate.gamma, candidate.h), {"x": x_values}))
    return sub(h_next, float(hx - gx))


def dtcbf_margin(problem, candidate: Candidate, x, u) -> float:
    """h(f(x,u)) - h(x) + gamma(h(x)), evaluated numerically."""
    x = [float(v) for v in x]
    u = [float(v) for v in u]
    env = {"x": x, "u": u}
    x_next = [float(evaluate(fi, env)) for fi in problem.f]
    hx = float(evaluate(candidate.h, {"x": x}))
    h_next = float(evaluate(candidate.h, {"x": x_next}))
    g = float(evaluate(candidate.gamma, {"x": (hx,)}))
    return h_next - hx + g


def policy_input(candidate: Candidate, x) -> np.ndarray:
    if candidate.policy is None:
        raise ValueError("candidate has no policy")
    x = [float(v) for v in x]
    return np.array(
        [float(evaluate(p, {"x": x})) for p in candidate.policy], dtype=float
    )


def gamma_identity_fallback(candidate: Candidate) -> Candidate:
    """Replace the rate function with the identity (the least restrictive
    choice: the candidate is a valid barrier function for some admissible
    rate iff it is valid with the identity)."""
    return replace(candidate, gamma=gamma_identity())


# ---------------------------------------------------------------------------
# worklist engine
# ---------------------------------------------------------------------------


class _Terminal(Exception):
    """Internal: carries a terminal verdict out of the worklist loop."""

    def __init__(self, verdict: str, point: np.ndarray | None, record_id: int):
        self.verdict = verdict
        self.point = point
        self.record_id = record_id


class _Engine:
    """FIFO worklist over subdomains with the id numbering n_dom+1/n_dom+2
    for children.  `process` classifies one box; the engine applies the
    bookkeeping.  Deterministic for any thread count: wave results are
    applied in box-id order and the lowest-id terminal wins."""

    def __init__(self, search_box: BoxN, config: VerifierConfig, mode: str):
        self.root = search_box
        self.config = config
        self.records: list[SubdomainRecord] = [SubdomainRecord(0, None, search_box)]
        self.stats = VerifierStats(mode=mode, records=self.records)
        self.by_id: dict[int, SubdomainRecord] = {0: self.records[0]}
        self.worklist: deque[int] = deque([0])
        self.n_dom = 0

    def run(self, process) -> tuple[str, np.ndarray | None]:
        cfg = self.config
        t0 = time.monotonic()
        pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
        try:
            while self.worklist:
                if self.stats.iterations >= cfg.max_iterations:
                    raise BudgetExceeded("iteration budget exhausted", self.stats)
                if (
                    cfg.max_seconds is not None
                    and time.monotonic() - t0 > cfg.max_seconds
                ):
                    raise BudgetExceeded("time budget exhausted", self.stats)
                wave_n = 1 if pool is None else min(cfg.threads, len(self.worklist))
                ids = [self.worklist.popleft() for _ in range(wave_n)]
                boxes = [self.by_id[k].box for k in ids]
                if pool is None:
                    results = [process(boxes[0])]
                else:
                    results = list(pool.map(process, boxes))
                self.stats.iterations += len(ids)
                for k, action in zip(ids, results):
                    self._apply(k, action)
            return VALID, None
        except _Terminal as t:
            return t.verdict, t.point
        finally:
            if pool is not None:
                pool.shutdown(wait=False, cancel_futures=True)
            self.stats.wall_time = time.monotonic() - t0

    def _apply(self, rec_id: int, action: tuple):
        rec = self.by_id[rec_id]
        kind = action[0]
        if kind == "approve_valid":
            rec.status = APPROVED_VALID
            rec.relaxation_value = action[1]
            rec.assigned_input = action[2]
        elif kind == "approve_empty":
            rec.status = APPROVED_EMPTY
            rec.relaxation_value = action[1]
        elif kind in ("exact", "tolerance"):
            rec.status = STOPPED
            verdict = FALSIFIED_EXACT if kind == "exact" else FALSIFIED_TOLERANCE
            raise _Terminal(verdict, action[1], rec_id)
        elif kind == "split":
            left, right, dim, mid = bisect_detailed(rec.box, self.root)
            rec.status = SPLIT
            rec.split_dim = dim
            rec.split_mid = mid
            lid, rid = self.n_dom + 1, self.n_dom + 2
            self.n_dom += 2
            rec.children = (lid, rid)
            for cid, cbox in ((lid, left), (rid, right)):
                child = SubdomainRecord(cid, rec_id, cbox)
                self.records.append(child)
                self.by_id[cid] = child
                self.worklist.append(cid)
        else:  # pragma: no cover
            raise ValueError(f"unknown action {kind}")


def _stopping_known(a_f, a_h, diag_sq, cfg) -> bool:
    return (
        a_f.max * diag_sq * 0.25 <= cfg.eps_f
        and a_h.max * diag_sq * 0.25 <= cfg.eps_h
    )


def _tolerance_point(candidates, recheck) -> np.ndarray | None:
    """First candidate point that passes the independent numeric
    re-check of the tolerance-counterexample conditions."""
    for p in candidates:
        if p is not None and recheck(p):
            return np.asarray(p, dtype=float)
    return None


# ---------------------------------------------------------------------------
# verification entry points
# ---------------------------------------------------------------------------


def _empty_prefilter(neg_h: Expr, box: BoxN) -> bool:
    """Rigorous early Case-B test: -h strictly positive on the box."""
    try:
        return interval_evaluate(neg_h, {"x": box}).lo > 0.0
    except (DomainViolation, NonSmooth):
        return False


def _warn_degenerate_boundary_gradient(problem, candidate: Candidate):
    """Sampled (non-certifying) check that grad h does not vanish near the
    zero level set inside the search box."""
    try:
        from .expressions import taylor2

        n = problem.search_box.n
        res = max(3, int(round(2000 ** (1.0 / n))))
        axes = [np.linspace(d.lo, d.hi, res) for d in problem.search_box.dims]
        mesh = np.meshgrid(*axes, indexing="ij")
        flat = [m.ravel() for m in mesh]
        hvals = np.asarray(evaluate(candidate.h, {"x": flat}), dtype=float)
        scale = max(1e-9, float(np.max(np.abs(hvals))))
        near = np.nonzero(np.abs(hvals) <= 0.02 * scale)[0][:50]
        for idx in near:
            x = [float(c[idx]) for c in flat]
            _, g, _ = taylor2(candidate.h, {"x": x}, "x", n)
            if float(np.linalg.norm(g)) <= 1e-8:
                log.warning(
                    "gradient of h nearly vanishes on its zero level set near %s; "
                    "level-set regularity is assumed, not certified",
                    x,
                )
                return
    except (DomainViolation, NonSmooth):  # pragma: no cover
        pass


def verify_known(problem, candidate: Candidate, config: VerifierConfig | None = None) -> VerificationOutcome:
    """Verify (h, gamma) with a given policy, or falsify with a
    counterexample.  Raises BudgetExceeded when budgets run out."""
    if candidate.policy is None:
        raise ValueError("verify_known requires candidate.policy")
    cfg = config or VerifierConfig()
    _warn_degenerate_boundary_gradient(problem, candidate)
    margin = margin_expr_known(problem, candidate)
    neg_h = neg(candidate.h)
    root = problem.search_box
    scale = root.widths()
    n = root.n

    def margin_at(x) -> float:
        return dtcbf_margin(problem, candidate, x, policy_input(candidate, x))

    def h_at(x) -> float:
        return float(evaluate(candidate.h, {"x": [float(v) for v in x]}))

    def recheck_tol(p) -> bool:
        return h_at(p) >= -cfg.eps_h and margin_at(p) < cfg.eps_f

    cache: dict = {}

    def process(box: BoxN) -> tuple:
        if _empty_prefilter(neg_h, box):
            return ("approve_empty", None)
        try:
            uf = prepare(margin, box, cfg.alpha_safety, scale, "x", cache)
            uh = prepare(neg_h, box, cfg.alpha_safety, scale, "x", cache)
        except (DomainViolation, NonSmooth):
            return ("split",)
        try:
            res = convex.solve(uf, uh, box, tol=cfg.relax_tol, feas_tol=cfg.feas_tol, decide=0.0)
        except IterationLimit:
            return ("split",)
        if res.status == convex.INFEASIBLE:
            return ("approve_empty", res.infeasibility_certificate)
        if res.value >= 0.0:
            return ("approve_valid", res.value, None)
        x_star = res.minimizer
        if x_star is not None and h_at(x_star) >= 0.0 and margin_at(x_star) < 0.0:
            return ("exact", np.array(x_star))
        if _stopping_known(uf.alpha, uh.alpha, box_diagonal_sq(box), cfg):
            p = _tolerance_point([box_center(box), x_star], recheck_tol)
            if p is not None:
                return ("tolerance", p)
        return ("split",)

    engine = _Engine(root, cfg, "known")
    verdict, point = engine.run(process)
    return VerificationOutcome(verdict, point, None, engine.stats)


def verify_unknown(problem, candidate: Candidate, config: VerifierConfig | None = None) -> VerificationOutcome:
    """Verify (h, gamma) without a policy via the per-subdomain
    center-input procedure; on success returns a piecewise-constant
    friend assembled from the approved subdomains."""
    cfg = config or VerifierConfig()
    _warn_degenerate_boundary_gradient(problem, candidate)
    neg_h = neg(candidate.h)
    root = problem.search_box
    scale = root.widths()
    u_box = problem.u_box

    def h_at(x) -> float:
        return float(evaluate(candidate.h, {"x": [float(v) for v in x]}))

    cache: dict = {}

    def process(box: BoxN) -> tuple:
        if _empty_prefilter(neg_h, box):
            return ("approve_empty", None)
        x_bar = box_center(box)
        # Step I/II: best input for the subdomain center, solved globally.
        f_u = margin_expr_in_inputs(problem, candidate, x_bar)
        opt = abb_maximize(
            f_u, None, u_box, cfg.input_opt_eps,
            budget=cfg.input_opt_budget, kind="u",
            alpha_safety=cfg.alpha_safety, relax_tol=min(cfg.relax_tol, cfg.input_opt_eps / 4),
        )
        if opt.minimizer is None:
            return ("split",)
        u_star = np.clip(opt.minimizer, u_box.lo_array(), u_box.hi_array())
        # Case C.1: the center is inside the candidate set yet even the
        # certified best input fails the constraint.
        if h_at(x_bar) >= 0.0 and opt.upper_bound < 0.0:
            return ("exact", np.array(x_bar))
        # Step III: fix the input, verify over the whole subdomain.
        margin_u = margin_expr_fixed_input(problem, candidate, u_star)
        try:
            uf = prepare(margin_u, box, cfg.alpha_safety, scale, "x")
            uh = prepare(neg_h, box, cfg.alpha_safety, scale, "x", cache)
        except (DomainViolation, NonSmooth):
            return ("split",)
        try:
            res = convex.solve(uf, uh, box, tol=cfg.relax_tol, feas_tol=cfg.feas_tol, decide=0.0)
        except IterationLimit:
            return ("split",)
        if res.status == convex.INFEASIBLE:
            return ("approve_empty", res.infeasibility_certificate)
        if res.value >= 0.0:
            return ("approve_valid", res.value, tuple(float(v) for v in u_star))
        diag_sq = box_diagonal_sq(box)
        if _stopping_known(uf.alpha, uh.alpha, diag_sq, cfg) and diag_sq <= cfg.eps_d:

            def recheck_tol(p) -> bool:
                return (
                    h_at(p) >= -cfg.eps_h
                    and dtcbf_margin(problem, candidate, p, u_star) < cfg.eps_f
                )

            p = _tolerance_point([x_bar, res.minimizer], recheck_tol)
            if p is not None:
                return ("tolerance", p)
        return ("split",)

    engine = _Engine(root, cfg, "unknown")
    verdict, point = engine.run(process)
    friend = None
    if verdict == VALID:
        friend = PiecewiseConstantFriend.from_records(engine.records)
    return VerificationOutcome(verdict, point, friend, engine.stats)


def check_safe_subset(problem, candidate: Candidate, config: VerifierConfig | None = None) -> SafeSubsetResult:
    """Certify that the zero-superlevel set of h lies inside the safe set
    {s >= 0}, with the same branch-and-bound scheme applied to objective
    s and constraint -h."""
    if problem.s is None:
        raise ValueError("problem has no safe-set function")
    cfg = config or VerifierConfig()
    s_expr = problem.s
    neg_h = neg(candidate.h)
    root = problem.search_box
    scale = root.widths()

    def h_at(x) -> float:
        return float(evaluate(candidate.h, {"x": [float(v) for v in x]}))

    def s_at(x) -> float:
        return float(evaluate(s_expr, {"x": [float(v) for v in x]}))

    def recheck_tol(p) -> bool:
        return h_at(p) >= -cfg.eps_h and s_at(p) < cfg.eps_f

    cache: dict = {}

    def process(box: BoxN) -> tuple:
        if _empty_prefilter(neg_h, box):
            return ("approve_empty", None)
        try:
            us = prepare(s_expr, box, cfg.alpha_safety, scale, "x", cache)
            uh = prepare(neg_h, box, cfg.alpha_safety, scale, "x", cache)
        except (DomainViolation, NonSmooth):
            return ("split",)
        try:
            res = convex.solve(us, uh, box, tol=cfg.relax_tol, feas_tol=cfg.feas_tol, decide=0.0)
        except IterationLimit:
            return ("split",)
        if res.status == convex.INFEASIBLE:
            return ("approve_empty", res.infeasibility_certificate)
        if res.value >= 0.0:
            return ("approve_valid", res.value, None)
        x_star = res.minimizer
        if x_star is not None and h_at(x_star) >= 0.0 and s_at(x_star) < 0.0:
            return ("exact", np.array(x_star))
        if _stopping_known(us.alpha, uh.alpha, box_diagonal_sq(box), cfg):
            p = _tolerance_point([box_center(box), x_star], recheck_tol)
            if p is not None:
                return ("tolerance", p)
        return ("split",)

    engine = _Engine(root, cfg, "safe_subset")
    verdict, point = engine.run(process)
    status = {
        VALID: HOLDS,
        FALSIFIED_EXACT: VIOLATED,
        FALSIFIED_TOLERANCE: VIOLATED_TOLERANCE,
    }[verdict]
    return SafeSubsetResult(status, point, engine.stats)
