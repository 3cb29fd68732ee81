"""Problem definitions, the problem-file loader, built-in case studies,
and the online safety-filter rollout.

Problem files are sectioned UTF-8 text:

    [system]     n, m, named numeric constants, f1..fn formulas
    [input]      u<i> = lo, hi        (one per input dimension)
    [safe]       s = formula          (optional)
    [candidate]  h, gamma ("id" | "lin c" | formula in r), pi1..pim (optional)
    [search]     x<i> = lo, hi        (one per state dimension)
    [synthesis]  templates, coefficient boxes, outer objective/constraints,
                 admissibility / safe-subset modes (optional)

The loader validates dimensions, rejects unknown keys, and applies the
sampled rate-function check.  `builtin(name)` loads the packaged files
for "poly2d", "linear2d" and "cartpole".
"""

from __future__ import annotations

import importlib.resources
import re
from dataclasses import dataclass

import numpy as np

from .errors import (
    DomainViolation,
    FilterInfeasible,
    ParseError,
    SchemaError,
)
from .expressions import (
    Expr,
    ExprVec,
    const,
    evaluate,
    gamma_identity,
    gamma_linear,
    gamma_report,
    interval_evaluate,
    neg,
    pow_int,
    sub,
    var,
)
from .globalopt import INFEASIBLE, abb_minimize
from .intervals import BoxN, Interval
from .parsing import VarContext, parse_formula
from .synthesis import DIRECT, INNER_BB, PER_COMPONENT, SUPER_ELLIPSOID, SYMMETRIC_SQUARE, SynthesisSpec
from .verifier import Candidate, dtcbf_margin, margin_expr_in_inputs

__all__ = [
    "Problem",
    "Trajectory",
    "TrajectoryStep",
    "ProblemBundle",
    "load_problem",
    "loads_problem",
    "builtin",
    "builtin_names",
    "rollout_filter",
]

BUILTINS = ("poly2d", "linear2d", "cartpole")


@dataclass(frozen=True)
class Problem:
    """Discrete-time system x+ = f(x, u) with input box, optional safe-set
    function s, and the rectangular search region covering the candidate
    zero-superlevel set."""

    name: str
    n: int
    m: int
    f: ExprVec
    u_box: BoxN
    s: Expr | None
    search_box: BoxN
    constants: dict[str, float]


@dataclass(frozen=True)
class TrajectoryStep:
    t: int
    state: tuple[float, ...]
    applied_input: tuple[float, ...]
    margin: float


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[TrajectoryStep, ...]
    final_state: tuple[float, ...]


@dataclass(frozen=True)
class ProblemBundle:
    problem: Problem
    candidate: Candidate | None
    synthesis: SynthesisSpec | None


# ---------------------------------------------------------------------------
# file parsing
# ---------------------------------------------------------------------------

_SECTIONS = ("system", "input", "safe", "candidate", "search", "synthesis")
_NUM = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_PAIR_RE = re.compile(rf"^\s*({_NUM})\s*,\s*({_NUM})\s*$")
_RESERVED_IDENT = re.compile(r"^(?:[xutm]\d+|r)$")


def _read_sections(text: str, path: str) -> dict[str, list[tuple[str, str, int]]]:
    sections: dict[str, list[tuple[str, str, int]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip().lower()
            if name not in _SECTIONS:
                raise SchemaError(f"unknown section [{name}]", path, lineno)
            if name in sections:
                raise SchemaError(f"duplicate section [{name}]", path, lineno)
            sections[name] = []
            current = name
            continue
        if current is None:
            raise SchemaError("content before any section header", path, lineno)
        if "=" not in line:
            raise SchemaError("expected key = value", path, lineno)
        key, value = line.split("=", 1)
        key = key.strip()
        value = value.strip()
        if not key or not value:
            raise SchemaError("expected key = value", path, lineno)
        if any(k == key for k, _, _ in sections[current]):
            raise SchemaError(f"duplicate key {key!r} in [{current}]", path, lineno)
        sections[current].append((key, value, lineno))
    return sections


def _as_int(value: str, key: str, path: str, line: int) -> int:
    try:
        return int(value)
    except ValueError as exc:
        raise SchemaError(f"{key} must be an integer, got {value!r}", path, line) from exc


def _as_float(value: str) -> float | None:
    try:
        return float(value)
    except ValueError:
        return None


def _as_pair(value: str, key: str, path: str, line: int) -> tuple[float, float]:
    mo = _PAIR_RE.match(value)
    if not mo:
        raise SchemaError(f"{key} must be 'lo, hi', got {value!r}", path, line)
    lo, hi = float(mo.group(1)), float(mo.group(2))
    if lo > hi:
        raise SchemaError(f"{key}: lower bound exceeds upper bound", path, line)
    return lo, hi


def _parse(formula: str, ctx: VarContext, path: str, line: int) -> Expr:
    try:
        return parse_formula(formula, ctx)
    except ParseError as exc:
        raise SchemaError(str(exc), path, line) from exc


def _parse_gamma(value: str, ctx_consts: dict, path: str, line: int, r_max: float) -> Expr:
    value = value.strip()
    if value == "id":
        return gamma_identity()
    mo = re.match(rf"^lin\s+({_NUM})$", value)
    if mo:
        c = float(mo.group(1))
        if not (0.0 < c <= 1.0):
            raise SchemaError(f"linear rate coefficient must be in (0, 1], got {c}", path, line)
        return gamma_linear(c)
    ctx = VarContext(constants=ctx_consts, allow_r=True)
    gamma = _parse(value, ctx, path, line)
    reason = gamma_report(gamma, r_max)
    if reason is not None:
        raise SchemaError(f"rate function check failed: {reason}", path, line)
    return gamma


def loads_problem(text: str, path: str = "<string>", name: str = "problem") -> ProblemBundle:
    """Parse a problem file from a string.  See module docstring for the
    schema; raises SchemaError with file/line positions."""
    secs = _read_sections(text, path)
    for required in ("system", "input", "search"):
        if required not in secs:
            raise SchemaError(f"missing required section [{required}]", path)

    # ---- [system]: dimensions, constants, dynamics --------------------
    sys_items = {k: (v, ln) for k, v, ln in secs["system"]}
    if "n" not in sys_items or "m" not in sys_items:
        raise SchemaError("[system] must declare n and m", path)
    n = _as_int(sys_items["n"][0], "n", path, sys_items["n"][1])
    m = _as_int(sys_items["m"][0], "m", path, sys_items["m"][1])
    if n < 1 or m < 1:
        raise SchemaError("n and m must be >= 1", path)
    constants: dict[str, float] = {}
    f_texts: dict[int, tuple[str, int]] = {}
    for key, value, ln in secs["system"]:
        if key in ("n", "m"):
            continue
        mo = re.match(r"^f(\d+)$", key)
        if mo:
            i = int(mo.group(1))
            if not (1 <= i <= n):
                raise SchemaError(f"dynamics component {key} out of range (n={n})", path, ln)
            f_texts[i] = (value, ln)
            continue
        if _RESERVED_IDENT.match(key):
            raise SchemaError(f"constant name {key!r} collides with a variable name", path, ln)
        v = _as_float(value)
        if v is None:
            raise SchemaError(f"unknown [system] key {key!r} (not a numeric constant)", path, ln)
        constants[key] = v
    missing = [i for i in range(1, n + 1) if i not in f_texts]
    if missing:
        raise SchemaError(f"missing dynamics components f{missing}", path)
    ctx_xu = VarContext(n_state=n, n_input=m, constants=constants)
    f = ExprVec(tuple(_parse(f_texts[i][0], ctx_xu, path, f_texts[i][1]) for i in range(1, n + 1)))

    # ---- [input] -------------------------------------------------------
    in_items = {k: (v, ln) for k, v, ln in secs["input"]}
    u_bounds = []
    for j in range(1, m + 1):
        key = f"u{j}"
        if key not in in_items:
            raise SchemaError(f"missing [input] bound {key}", path)
        u_bounds.append(_as_pair(in_items[key][0], key, path, in_items[key][1]))
    for key, (v, ln) in in_items.items():
        if not re.match(r"^u\d+$", key) or not (1 <= int(key[1:]) <= m):
            raise SchemaError(f"unknown [input] key {key!r}", path, ln)
    u_box = BoxN.from_bounds(u_bounds)

    # ---- [search] ------------------------------------------------------
    se_items = {k: (v, ln) for k, v, ln in secs["search"]}
    x_bounds = []
    for i in range(1, n + 1):
        key = f"x{i}"
        if key not in se_items:
            raise SchemaError(f"missing [search] bound {key}", path)
        x_bounds.append(_as_pair(se_items[key][0], key, path, se_items[key][1]))
    for key, (v, ln) in se_items.items():
        if not re.match(r"^x\d+$", key) or not (1 <= int(key[1:]) <= n):
            raise SchemaError(f"unknown [search] key {key!r}", path, ln)
    search_box = BoxN.from_bounds(x_bounds)

    # ---- [safe] --------------------------------------------------------
    s_expr: Expr | None = None
    if "safe" in secs:
        sa_items = {k: (v, ln) for k, v, ln in secs["safe"]}
        for key, (v, ln) in sa_items.items():
            if key != "s":
                raise SchemaError(f"unknown [safe] key {key!r}", path, ln)
        if "s" not in sa_items:
            raise SchemaError("[safe] requires key s", path)
        ctx_x = VarContext(n_state=n, constants=constants)
        s_expr = _parse(sa_items["s"][0], ctx_x, path, sa_items["s"][1])

    problem = Problem(name, n, m, f, u_box, s_expr, search_box, dict(constants))

    # ---- [candidate] ---------------------------------------------------
    candidate: Candidate | None = None
    if "candidate" in secs:
        ca_items = {k: (v, ln) for k, v, ln in secs["candidate"]}
        allowed = {"h", "gamma"} | {f"pi{j}" for j in range(1, m + 1)}
        for key, (v, ln) in ca_items.items():
            if key not in allowed:
                raise SchemaError(f"unknown [candidate] key {key!r}", path, ln)
        if "h" not in ca_items:
            raise SchemaError("[candidate] requires key h", path)
        ctx_x = VarContext(n_state=n, constants=constants)
        h = _parse(ca_items["h"][0], ctx_x, path, ca_items["h"][1])
        r_max = _candidate_r_max(h, search_box)
        if "gamma" in ca_items:
            gamma = _parse_gamma(ca_items["gamma"][0], constants, path, ca_items["gamma"][1], r_max)
        else:
            gamma = gamma_identity()
        pi_keys = [f"pi{j}" for j in range(1, m + 1)]
        present = [k for k in pi_keys if k in ca_items]
        policy = None
        if present:
            if len(present) != m:
                raise SchemaError(
                    f"[candidate] policy must define all of {pi_keys} or none", path
                )
            policy = ExprVec(
                tuple(_parse(ca_items[k][0], ctx_x, path, ca_items[k][1]) for k in pi_keys)
            )
        candidate = Candidate(h=h, gamma=gamma, policy=policy)

    # ---- [synthesis] ---------------------------------------------------
    synth: SynthesisSpec | None = None
    if "synthesis" in secs:
        synth = _load_synthesis(secs["synthesis"], problem, constants, path, search_box)

    return ProblemBundle(problem, candidate, synth)


def _candidate_r_max(h: Expr, search_box: BoxN) -> float:
    try:
        return max(1.0, interval_evaluate(h, {"x": search_box}).hi)
    except DomainViolation:
        return 1.0


def _load_synthesis(items, problem: Problem, constants, path, search_box) -> SynthesisSpec:
    d = {k: (v, ln) for k, v, ln in items}
    n, m = problem.n, problem.m

    theta_bounds = []
    i = 1
    while f"theta{i}" in d:
        theta_bounds.append(_as_pair(d[f"theta{i}"][0], f"theta{i}", path, d[f"theta{i}"][1]))
        i += 1
    mu_bounds = []
    j = 1
    while f"mu{j}" in d:
        mu_bounds.append(_as_pair(d[f"mu{j}"][0], f"mu{j}", path, d[f"mu{j}"][1]))
        j += 1
    if not theta_bounds:
        raise SchemaError("[synthesis] requires theta1.. bounds", path)
    if not mu_bounds:
        raise SchemaError("[synthesis] requires mu1.. bounds", path)
    n_theta, n_mu = len(theta_bounds), len(mu_bounds)

    ctx_ht = VarContext(n_state=n, n_theta=n_theta, constants=constants)
    ctx_pt = VarContext(n_state=n, n_theta=n_theta, n_mu=n_mu, constants=constants)
    ctx_t = VarContext(n_theta=n_theta, constants=constants)

    def need(key):
        if key not in d:
            raise SchemaError(f"[synthesis] requires key {key}", path)
        return d[key]

    v, ln = need("h_template")
    h_template = _parse(v, ctx_ht, path, ln)
    pi_templates = []
    for k in range(1, m + 1):
        v, ln = need(f"pi{k}_template")
        pi_templates.append(_parse(v, ctx_pt, path, ln))

    v, ln = need("outer_objective")
    outer_objective = _parse(v, ctx_t, path, ln)

    outer_constraints = []
    k = 1
    while f"outer_constraint{k}" in d:
        v, ln = d[f"outer_constraint{k}"]
        outer_constraints.append(_parse(v, ctx_t, path, ln))
        k += 1

    objective_bounds = []
    k = 1
    while f"outer_objective_bound{k}" in d:
        v, ln = d[f"outer_objective_bound{k}"]
        objective_bounds.append(_parse(v, ctx_t, path, ln))
        k += 1

    adm = d.get("admissibility", ("per_component", 0))[0]
    modes = {
        "per_component": PER_COMPONENT,
        "super_ellipsoid": SUPER_ELLIPSOID,
        "symmetric_square": SYMMETRIC_SQUARE,
    }
    if adm not in modes:
        raise SchemaError(f"unknown admissibility mode {adm!r}", path)
    safe_mode = d.get("safe_subset", ("inner_bb", 0))[0]
    safe_modes = {"inner_bb": INNER_BB, "direct": DIRECT}
    if safe_mode not in safe_modes:
        raise SchemaError(f"unknown safe_subset mode {safe_mode!r}", path)

    p_exp = 4
    if "p" in d:
        p_exp = _as_int(d["p"][0], "p", path, d["p"][1])
    eps_f = float(d.get("eps_f", ("1e-3", 0))[0])
    eps_F = float(d.get("eps_F", ("0.4", 0))[0])

    gamma_c_box = None
    if "gamma_c" in d:
        lo, hi = _as_pair(d["gamma_c"][0], "gamma_c", path, d["gamma_c"][1])
        if not (0.0 < lo <= hi <= 1.0):
            raise SchemaError("gamma_c bounds must lie in (0, 1]", path, d["gamma_c"][1])
        gamma_c_box = Interval(lo, hi)

    if "gamma" in d:
        gamma = _parse_gamma(d["gamma"][0], constants, path, d["gamma"][1], r_max=10.0)
    else:
        gamma = gamma_identity()

    known = {"h_template", "outer_objective", "admissibility", "safe_subset", "p",
             "eps_f", "eps_F", "gamma", "gamma_c"}
    known |= {f"pi{k}_template" for k in range(1, m + 1)}
    known |= {f"theta{i}" for i in range(1, n_theta + 1)}
    known |= {f"mu{j}" for j in range(1, n_mu + 1)}
    known |= {f"outer_constraint{k}" for k in range(1, len(outer_constraints) + 1)}
    known |= {f"outer_objective_bound{k}" for k in range(1, len(objective_bounds) + 1)}
    for key, (v, ln) in d.items():
        if key not in known:
            raise SchemaError(f"unknown [synthesis] key {key!r}", path, ln)

    return SynthesisSpec(
        problem=problem,
        h_template=h_template,
        pi_templates=ExprVec(tuple(pi_templates)),
        theta_box=BoxN.from_bounds(theta_bounds),
        mu_box=BoxN.from_bounds(mu_bounds),
        gamma=gamma,
        outer_objective=outer_objective,
        outer_param_constraints=tuple(outer_constraints),
        outer_objective_bounds=tuple(objective_bounds),
        admissibility_mode=modes[adm],
        p_exponent=p_exp,
        safe_subset_mode=safe_modes[safe_mode],
        eps_f=eps_f,
        eps_F=eps_F,
        gamma_c_box=gamma_c_box,
    )


def load_problem(path: str) -> ProblemBundle:
    """Load and validate a problem file from disk."""
    import os

    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    name = os.path.splitext(os.path.basename(path))[0]
    return loads_problem(text, path, name)


def builtin_names() -> tuple[str, ...]:
    return BUILTINS


def builtin(name: str) -> ProblemBundle:
    """Load one of the packaged case studies ("poly2d", "linear2d",
    "cartpole"); identical to loading the shipped file."""
    if name not in BUILTINS:
        raise SchemaError(f"unknown builtin problem {name!r}; have {BUILTINS}")
    text = (
        importlib.resources.files("dtcbf")
        .joinpath(f"problems_data/{name}.prob")
        .read_text(encoding="utf-8")
    )
    return loads_problem(text, f"builtin:{name}", name)


# ---------------------------------------------------------------------------
# online safety-filter rollout
# ---------------------------------------------------------------------------


def rollout_filter(
    problem: Problem,
    candidate: Candidate,
    nominal: ExprVec,
    x0,
    steps: int,
    opt_eps: float = 1e-8,
    opt_budget: int = 4000,
) -> Trajectory:
    """Roll the system forward, at each step applying the admissible
    input closest to the nominal policy among those satisfying the
    barrier constraint (margin >= 0, enforced exactly on the applied
    input).  Raises FilterInfeasible when no such input is found."""
    x = [float(v) for v in x0]
    if float(evaluate(candidate.h, {"x": x})) < 0.0:
        raise ValueError(f"initial state {tuple(x)} is outside the candidate set")
    recs: list[TrajectoryStep] = []
    for t in range(steps):
        u_nom = [float(evaluate(p, {"x": x})) for p in nominal]
        objective = None
        for j, un in enumerate(u_nom):
            term = pow_int(sub(var("u", j), const(un)), 2)
            objective = term if objective is None else objective + term
        margin_u = margin_expr_in_inputs(problem, candidate, x)
        res = abb_minimize(
            objective,
            neg(margin_u),
            problem.u_box,
            eps_c=opt_eps,
            eps_feas=0.0,
            budget=opt_budget,
            kind="u",
        )
        if res.status == INFEASIBLE or res.minimizer is None:
            raise FilterInfeasible(t, x)
        u = [float(v) for v in res.minimizer]
        margin = dtcbf_margin(problem, candidate, x, u)
        recs.append(TrajectoryStep(t, tuple(x), tuple(u), margin))
        x = [float(evaluate(fi, {"x": x, "u": u})) for fi in problem.f]
    return Trajectory(tuple(recs), tuple(x))
