"""Branch-and-bound global minimization over a box (standard alpha-BB).

Per node, a convex underestimator of the objective (and of the single
optional inequality constraint) provides a certified lower bound via the
convex solver; evaluating the true objective at the relaxation minimizer
provides upper bounds whenever that point is eps-feasible for the *true*
constraint.  Node selection is best-first on the lower bound with FIFO
tie-break, so runs are deterministic.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import convex
from .errors import IterationLimit
from .expressions import Expr, evaluate, neg, substitute
from .intervals import BoxN, bisect_scaled_longest_side
from .underestimator import prepare

__all__ = ["GlobalResult", "abb_minimize", "abb_maximize", "grid_oracle"]

CONVERGED = "converged"
INFEASIBLE = "infeasible"
BUDGET = "budget"


@dataclass(frozen=True)
class GlobalResult:
    """Certified bracket of a global minimum (or maximum, see
    abb_maximize): lower_bound <= optimum <= upper_bound unless
    infeasible."""

    status: str
    minimizer: np.ndarray | None
    lower_bound: float
    upper_bound: float
    iterations: int
    history: tuple[tuple[float, float], ...] = field(default=())


def _bind_other_kinds(e: Expr | None, kind: str, env: dict | None) -> Expr | None:
    if e is None or not env:
        return e
    mapping = {}
    for k, values in env.items():
        if k == kind:
            continue
        for i, v in enumerate(values):
            mapping[(k, i)] = float(v)
    return substitute(e, mapping)


def abb_minimize(
    objective: Expr,
    constraint: Expr | None,
    box: BoxN,
    eps_c: float,
    eps_feas: float = 1e-12,
    budget: int = 20000,
    *,
    kind: str = "x",
    env: dict | None = None,
    alpha_safety: float = 1.0,
    relax_tol: float | None = None,
    max_seconds: float | None = None,
    record_history: bool = False,
) -> GlobalResult:
    """Globally minimize objective s.t. constraint <= 0 over box.

    Variables of kinds other than `kind` must be bound to numbers via
    `env`; they are substituted out before the search.  Terminates when
    the certified gap is at most eps_c or the node budget is hit (budget
    exhaustion still returns valid bounds).
    """
    if eps_c <= 0.0 or eps_feas < 0.0:
        raise ValueError("tolerances must be positive")
    f = _bind_other_kinds(objective, kind, env)
    g = _bind_other_kinds(constraint, kind, env)
    rtol = relax_tol if relax_tol is not None else min(1e-8, 0.1 * eps_c)
    root_scale = box.widths()
    t0 = time.monotonic()

    incumbent_val = math.inf
    incumbent_x: np.ndarray | None = None
    heap: list[tuple[float, int, BoxN]] = []
    seq = 0
    iterations = 0
    history: list[tuple[float, float]] = []
    any_feasible_relaxation = False

    def point_value(e: Expr, x: np.ndarray) -> float:
        return float(evaluate(e, {kind: x}))

    cache: dict = {}

    def process(b: BoxN, parent_lb: float) -> float | None:
        """Returns the node lower bound, or None when pruned infeasible.
        May update the incumbent."""
        nonlocal incumbent_val, incumbent_x, any_feasible_relaxation
        try:
            uf = prepare(f, b, alpha_safety, root_scale, kind, cache)
            ug = None
            if g is not None:
                ug = prepare(g, b, alpha_safety, root_scale, kind, cache)
            res = convex.solve(uf, ug, b, tol=rtol)
        except IterationLimit:
            return max(parent_lb, -math.inf)  # unresolved: keep and split later
        if res.status == convex.INFEASIBLE:
            return None
        any_feasible_relaxation = True
        x_hat = res.minimizer
        if x_hat is not None:
            feas = g is None or point_value(g, x_hat) <= eps_feas
            if feas:
                val = point_value(f, x_hat)
                if val < incumbent_val:
                    incumbent_val = val
                    incumbent_x = np.array(x_hat)
        return max(parent_lb, res.value)

    lb0 = process(box, -math.inf)
    iterations += 1
    if lb0 is not None:
        heap = [(lb0, seq, box)]
        seq += 1

    while heap:
        # regions fathomed so far all had bounds >= incumbent - eps_c, so the
        # certified global lower bound must include that threshold
        global_lb = min(heap[0][0], incumbent_val - eps_c)
        if record_history:
            history.append((global_lb, incumbent_val))
        if incumbent_val - global_lb <= eps_c:
            return GlobalResult(
                CONVERGED, incumbent_x, global_lb, incumbent_val, iterations, tuple(history)
            )
        if iterations >= budget or (
            max_seconds is not None and time.monotonic() - t0 > max_seconds
        ):
            return GlobalResult(
                BUDGET, incumbent_x, global_lb, incumbent_val, iterations, tuple(history)
            )
        node_lb, _, b = heapq.heappop(heap)
        if node_lb >= incumbent_val - eps_c:
            continue  # fathomed
        left, right = bisect_scaled_longest_side(b, box)
        for child in (left, right):
            child_lb = process(child, node_lb)
            iterations += 1
            if child_lb is not None and child_lb < incumbent_val - eps_c:
                heapq.heappush(heap, (child_lb, seq, child))
                seq += 1

    if incumbent_x is None:
        if any_feasible_relaxation:
            # relaxations were feasible but no eps-feasible point was found
            # before the tree was exhausted; report honestly as budget-like
            return GlobalResult(BUDGET, None, -math.inf, math.inf, iterations, tuple(history))
        return GlobalResult(INFEASIBLE, None, math.inf, math.inf, iterations, tuple(history))
    return GlobalResult(
        CONVERGED,
        incumbent_x,
        incumbent_val - eps_c,
        incumbent_val,
        iterations,
        tuple(history),
    )


def abb_maximize(
    objective: Expr,
    constraint: Expr | None,
    box: BoxN,
    eps_c: float,
    eps_feas: float = 1e-12,
    budget: int = 20000,
    **kwargs,
) -> GlobalResult:
    """Globally maximize objective: runs abb_minimize on its negation.

    In the returned result, `minimizer` is the maximizer candidate,
    `lower_bound` the value achieved there, and `upper_bound` a
    certified upper bound on the true maximum.
    """
    res = abb_minimize(neg(objective), constraint, box, eps_c, eps_feas, budget, **kwargs)
    return GlobalResult(
        res.status,
        res.minimizer,
        -res.upper_bound,
        -res.lower_bound,
        res.iterations,
        tuple((-u, -l) for (l, u) in res.history),
    )


def grid_oracle(
    objective: Expr,
    constraint: Expr | None,
    box: BoxN,
    resolution: int,
    *,
    kind: str = "x",
    env: dict | None = None,
) -> float:
    """Brute-force minimum of the objective over all grid points
    satisfying the constraint (test oracle; resolution >= 2 per dim)."""
    if resolution < 2:
        raise ValueError("grid resolution must be >= 2 per dimension")
    f = _bind_other_kinds(objective, kind, env)
    g = _bind_other_kinds(constraint, kind, env)
    axes = [np.linspace(d.lo, d.hi, resolution) for d in box.dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    flat = [m.ravel() for m in mesh]
    vals = np.asarray(evaluate(f, {kind: flat}), dtype=float)
    vals = np.broadcast_to(vals, flat[0].shape).astype(float)
    if g is not None:
        cons = np.asarray(evaluate(g, {kind: flat}), dtype=float)
        cons = np.broadcast_to(cons, flat[0].shape)
        vals = np.where(cons <= 0.0, vals, np.inf)
    return float(np.min(vals))
