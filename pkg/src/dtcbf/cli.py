"""Command-line interface.

Subcommands: verify, synthesize, check-safe, minimize, rollout.  Every
run emits a JSON report that echoes the full configuration (re-running
from the echo reproduces the verdict in deterministic mode).  Exit codes
are stable and documented per subcommand below.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import problems as prob_mod
from . import synthesis as synth_mod
from .errors import BudgetExceeded, DTCBFError, FilterInfeasible, SchemaError
from .globalopt import CONVERGED, INFEASIBLE, abb_minimize
from .expressions import neg
from .verifier import (
    FALSIFIED_EXACT,
    FALSIFIED_TOLERANCE,
    HOLDS,
    VALID,
    VIOLATED,
    VIOLATED_TOLERANCE,
    VerifierConfig,
    check_safe_subset,
    margin_expr_known,
    verify_known,
    verify_unknown,
)

log = logging.getLogger("dtcbf.cli")

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_FALSIFIED = 2
EXIT_TOLERANCE = 3
EXIT_BUDGET = 4


def _setup_logging():
    level = os.environ.get("DTCBF_LOG", "WARNING").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.WARNING),
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
    )


def _load(problem_arg: str) -> prob_mod.ProblemBundle:
    if problem_arg in prob_mod.builtin_names():
        return prob_mod.builtin(problem_arg)
    return prob_mod.load_problem(problem_arg)


def _config_from_args(args) -> VerifierConfig:
    return VerifierConfig(
        eps_f=args.eps_f,
        eps_h=args.eps_h,
        eps_d=args.eps_d,
        max_iterations=args.budget_iters,
        max_seconds=args.budget_seconds,
        threads=1 if args.deterministic else args.threads,
    )


def _write_json(path: str | None, payload: dict) -> None:
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)


def _records_payload(stats) -> list[dict]:
    out = []
    for r in stats.records:
        out.append(
            {
                "id": r.id,
                "parent": r.parent,
                "bounds": r.box.bounds(),
                "status": r.status,
                "assigned_input": list(r.assigned_input) if r.assigned_input else None,
                "relaxation_value": r.relaxation_value,
            }
        )
    return out


def _point(x) -> list[float] | None:
    return None if x is None else [float(v) for v in x]


def _common_run_payload(args, command: str) -> dict:
    cfg = {
        k: getattr(args, k.replace("-", "_"))
        for k in (
            "problem", "eps_f", "eps_h", "eps_d", "eps_c", "eps_feas", "eps_F",
            "budget_iters", "budget_seconds", "threads", "deterministic",
        )
        if hasattr(args, k.replace("-", "_"))
    }
    if hasattr(args, "mode"):
        cfg["mode"] = args.mode
    return {"command": command, "config": cfg}


def cmd_verify(args) -> int:
    """Exit codes: 0 valid, 2 falsified exactly, 3 falsified for the
    configured tolerances, 4 budget exhausted, 1 I/O or schema error."""
    bundle = _load(args.problem)
    if bundle.candidate is None:
        raise SchemaError("problem file has no [candidate] section", args.problem)
    cfg = _config_from_args(args)
    report = _common_run_payload(args, "verify")
    t0 = time.monotonic()
    try:
        if args.mode == "known":
            outcome = verify_known(bundle.problem, bundle.candidate, cfg)
        else:
            candidate = bundle.candidate
            if candidate.policy is not None:
                candidate = type(candidate)(candidate.h, candidate.gamma, None)
            outcome = verify_unknown(bundle.problem, candidate, cfg)
    except BudgetExceeded as exc:
        report.update(
            verdict="budget_exceeded",
            stats=_stats_payload(exc.stats, t0),
        )
        if args.cells and exc.stats is not None:
            _write_json(args.cells, _records_payload(exc.stats))
        _write_json(args.out, report)
        print("verification budget exhausted; no verdict")
        return EXIT_BUDGET
    report.update(
        verdict=outcome.verdict,
        counterexample=_point(outcome.counterexample),
        stats=_stats_payload(outcome.stats, t0),
    )
    if outcome.friend is not None:
        report["friend_pieces"] = len(outcome.friend.pairs())
    if args.cells:
        _write_json(args.cells, _records_payload(outcome.stats))
        report["artifacts"] = {"cells": args.cells}
    _write_json(args.out, report)
    if outcome.verdict == VALID:
        print("candidate verified: (h, gamma) is a valid barrier function")
        return EXIT_OK
    if outcome.verdict == FALSIFIED_EXACT:
        print(f"candidate falsified; counterexample {_point(outcome.counterexample)}")
        return EXIT_FALSIFIED
    if outcome.verdict == FALSIFIED_TOLERANCE:
        print(
            "candidate falsified for the configured tolerances; "
            f"counterexample {_point(outcome.counterexample)}"
        )
        return EXIT_TOLERANCE
    return EXIT_ERROR  # pragma: no cover


def _stats_payload(stats, t0) -> dict:
    if stats is None:
        return {"wall_time": time.monotonic() - t0}
    return {
        "mode": stats.mode,
        "iterations": stats.iterations,
        "wall_time": stats.wall_time,
        "box_counts": stats.counts(),
    }


def cmd_synthesize(args) -> int:
    """Exit codes: 0 found (cross-check valid), 3 infeasible, 4 budget,
    1 schema error."""
    bundle = _load(args.problem)
    if bundle.synthesis is None:
        raise SchemaError("problem file has no [synthesis] section", args.problem)
    spec = bundle.synthesis
    if args.eps_f is not None or args.eps_F is not None:
        from dataclasses import replace

        spec = replace(
            spec,
            eps_f=args.eps_f if args.eps_f is not None else spec.eps_f,
            eps_F=args.eps_F if args.eps_F is not None else spec.eps_F,
        )
    report = _common_run_payload(args, "synthesize")
    outcome = synth_mod.synthesize(
        spec,
        budget_nodes=args.budget_iters,
        budget_seconds=args.budget_seconds,
    )
    report.update(
        status=outcome.status,
        theta=_point(outcome.theta),
        mu=_point(outcome.mu),
        gamma_c=outcome.gamma_c,
        outer_value=outcome.outer_value,
        crosscheck=None if outcome.crosscheck is None else outcome.crosscheck.verdict,
        certificates=[
            {
                "name": c.name,
                "kind": c.kind,
                "threshold": c.threshold,
                "lower": c.lower,
                "upper": c.upper,
                "gap": c.gap,
                "passed": c.passed,
            }
            for c in outcome.certificates
        ],
        stats=outcome.stats,
    )
    _write_json(args.out, report)
    if outcome.status == synth_mod.FOUND:
        print(
            f"synthesis found coefficients theta={_point(outcome.theta)} "
            f"mu={_point(outcome.mu)} (outer value {outcome.outer_value:.6f})"
        )
        return EXIT_OK
    if outcome.status == synth_mod.INFEASIBLE:
        print("synthesis infeasible for the given specification")
        return EXIT_TOLERANCE
    print("synthesis budget exhausted")
    return EXIT_BUDGET


def cmd_check_safe(args) -> int:
    """Exit codes: 0 holds, 2 violated, 3 violated for the tolerances,
    4 budget, 1 schema error."""
    bundle = _load(args.problem)
    if bundle.candidate is None:
        raise SchemaError("problem file has no [candidate] section", args.problem)
    if bundle.problem.s is None:
        raise SchemaError("problem file has no [safe] section", args.problem)
    cfg = _config_from_args(args)
    report = _common_run_payload(args, "check-safe")
    t0 = time.monotonic()
    try:
        res = check_safe_subset(bundle.problem, bundle.candidate, cfg)
    except BudgetExceeded as exc:
        report.update(status="budget_exceeded", stats=_stats_payload(exc.stats, t0))
        _write_json(args.out, report)
        print("safe-subset check budget exhausted")
        return EXIT_BUDGET
    report.update(
        status=res.status,
        point=_point(res.point),
        stats=_stats_payload(res.stats, t0),
    )
    _write_json(args.out, report)
    print(f"safe-subset check: {res.status}")
    return {HOLDS: EXIT_OK, VIOLATED: EXIT_FALSIFIED, VIOLATED_TOLERANCE: EXIT_TOLERANCE}[
        res.status
    ]


def cmd_minimize(args) -> int:
    """Globally minimize a target function over the search box subject to
    membership of the candidate set.  Exit codes: 0 converged, 3
    infeasible, 4 budget, 1 schema error."""
    bundle = _load(args.problem)
    if bundle.candidate is None:
        raise SchemaError("problem file has no [candidate] section", args.problem)
    problem, candidate = bundle.problem, bundle.candidate
    if args.target == "margin-known":
        if candidate.policy is None:
            raise SchemaError("margin-known target requires a candidate policy", args.problem)
        objective = margin_expr_known(problem, candidate)
    elif args.target == "safe":
        if problem.s is None:
            raise SchemaError("safe target requires a [safe] section", args.problem)
        objective = problem.s
    else:  # pragma: no cover - argparse restricts choices
        raise SchemaError(f"unknown target {args.target!r}")
    constraint = neg(candidate.h)
    report = _common_run_payload(args, "minimize")
    report["target"] = args.target
    res = abb_minimize(
        objective,
        constraint,
        problem.search_box,
        eps_c=args.eps_c,
        eps_feas=args.eps_feas,
        budget=args.budget_iters,
        max_seconds=args.budget_seconds,
    )
    report.update(
        status=res.status,
        minimizer=_point(res.minimizer),
        lower_bound=res.lower_bound,
        upper_bound=res.upper_bound,
        iterations=res.iterations,
        certified_gap=res.upper_bound - res.lower_bound,
    )
    _write_json(args.out, report)
    if res.status == CONVERGED:
        print(
            f"minimum {res.upper_bound:.9g} at {_point(res.minimizer)} "
            f"(certified gap {res.upper_bound - res.lower_bound:.3g})"
        )
        return EXIT_OK
    if res.status == INFEASIBLE:
        print("problem certified infeasible")
        return EXIT_TOLERANCE
    print("minimization budget exhausted")
    return EXIT_BUDGET


def cmd_rollout(args) -> int:
    """Closed-loop rollout under the safety filter; writes a CSV of
    states, applied inputs, barrier values and margins.  Exit codes:
    0 full trajectory, 2 filter infeasible, 1 schema error."""
    bundle = _load(args.problem)
    if bundle.candidate is None:
        raise SchemaError("problem file has no [candidate] section", args.problem)
    problem, candidate = bundle.problem, bundle.candidate
    if args.nominal == "policy":
        if candidate.policy is None:
            raise SchemaError("nominal=policy requires candidate policy", args.problem)
        nominal = candidate.policy
    else:
        from .expressions import ExprVec, const

        nominal = ExprVec(tuple(const(0.0) for _ in range(problem.m)))
    x0 = [float(v) for v in args.x0.split(",")]
    if len(x0) != problem.n:
        raise SchemaError(f"--x0 must have {problem.n} components", args.problem)
    report = _common_run_payload(args, "rollout")
    try:
        traj = prob_mod.rollout_filter(problem, candidate, nominal, x0, args.steps)
    except FilterInfeasible as exc:
        report.update(status="filter_infeasible", step=exc.step, state=list(exc.state))
        _write_json(args.out_report, report)
        print(f"safety filter infeasible at step {exc.step}")
        return EXIT_FALSIFIED
    from .expressions import evaluate

    path = args.out or "rollout.csv"
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        header = (
            ["t"]
            + [f"x{i + 1}" for i in range(problem.n)]
            + [f"u{j + 1}" for j in range(problem.m)]
            + ["h", "margin"]
        )
        w.writerow(header)
        for step in traj.steps:
            hval = float(evaluate(candidate.h, {"x": list(step.state)}))
            w.writerow(
                [step.t]
                + [f"{v:.17g}" for v in step.state]
                + [f"{v:.17g}" for v in step.applied_input]
                + [f"{hval:.17g}", f"{step.margin:.17g}"]
            )
    report.update(status="completed", steps=len(traj.steps), csv=path,
                  final_state=list(traj.final_state))
    _write_json(args.out_report, report)
    print(f"rollout completed: {len(traj.steps)} steps written to {path}")
    return EXIT_OK


def _add_common(p: argparse.ArgumentParser, with_verifier_eps=True):
    p.add_argument("--problem", required=True, help="path to a problem file or a builtin name")
    if with_verifier_eps:
        p.add_argument("--eps-f", type=float, default=1e-6, dest="eps_f")
        p.add_argument("--eps-h", type=float, default=1e-6, dest="eps_h")
        p.add_argument("--eps-d", type=float, default=1e-6, dest="eps_d")
    p.add_argument("--budget-iters", type=int, default=2_000_000)
    p.add_argument("--budget-seconds", type=float, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--deterministic", action="store_true", default=True,
                   help="single-threaded reproducible mode (default)")
    p.add_argument("--parallel", dest="deterministic", action="store_false",
                   help="allow --threads > 1")
    p.add_argument("--out", default=None, help="write a JSON run report here")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="dtcbf",
        description=(
            "Verify and synthesize discrete-time control barrier functions "
            "by branch-and-bound over convex underestimators."
        ),
    )
    sp = ap.add_subparsers(dest="cmd", required=True)

    p = sp.add_parser("verify", help="verify or falsify a candidate barrier")
    _add_common(p)
    p.add_argument("--mode", choices=("known", "unknown"), default="known")
    p.add_argument("--cells", default=None, help="write subdomain records (JSON) here")
    p.set_defaults(fn=cmd_verify)

    p = sp.add_parser("synthesize", help="synthesize barrier and policy coefficients")
    _add_common(p, with_verifier_eps=False)
    p.add_argument("--eps-f", type=float, default=None, dest="eps_f",
                   help="override the file's inner tolerance")
    p.add_argument("--eps-F", type=float, default=None, dest="eps_F",
                   help="override the file's outer tolerance")
    p.set_defaults(fn=cmd_synthesize, budget_iters=200_000)

    p = sp.add_parser("check-safe", help="certify the candidate set lies in the safe set")
    _add_common(p)
    p.set_defaults(fn=cmd_check_safe)

    p = sp.add_parser("minimize", help="global minimization over the candidate set")
    _add_common(p, with_verifier_eps=False)
    p.add_argument("--target", choices=("margin-known", "safe"), default="margin-known")
    p.add_argument("--eps-c", type=float, default=1e-6, dest="eps_c")
    p.add_argument("--eps-feas", type=float, default=1e-12, dest="eps_feas")
    p.set_defaults(fn=cmd_minimize, budget_iters=20000)

    p = sp.add_parser("rollout", help="closed-loop rollout under the safety filter")
    _add_common(p, with_verifier_eps=False)
    p.add_argument("--x0", required=True, help="comma-separated initial state")
    p.add_argument("--steps", type=int, default=100)
    p.add_argument("--nominal", choices=("policy", "zero"), default="policy")
    p.add_argument("--out-report", default=None, help="write a JSON run report here")
    p.set_defaults(fn=cmd_rollout)
    return ap


def main(argv=None) -> int:
    _setup_logging()
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (SchemaError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    except DTCBFError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
