#!/usr/bin/env python3
"""Full barrier/policy coefficient synthesis for the poly2d case study,
followed by rollouts under the safety filter from several boundary
states (trajectory CSVs land in results/)."""

import csv
import json
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from dtcbf import builtin
from dtcbf.problems import rollout_filter
from dtcbf.synthesis import concrete_candidate, synthesize

OUT = pathlib.Path(__file__).resolve().parents[1] / "results"


def main():
    OUT.mkdir(exist_ok=True)
    bundle = builtin("poly2d")
    spec = bundle.synthesis

    t0 = time.monotonic()
    out = synthesize(spec, budget_nodes=400_000, budget_seconds=3600 * 3.5)
    dt = time.monotonic() - t0
    print(f"status {out.status} in {out.stats['iterations']} nodes ({dt:.0f} s)")
    if out.theta is None:
        return
    print(f"theta = {out.theta}")
    print(f"mu    = {out.mu}")
    print(f"outer objective {out.outer_value:.6f} "
          f"(ellipse discriminant {-out.outer_value:.6f})")
    print(f"cross-check: {out.crosscheck.verdict if out.crosscheck else 'n/a'}")
    report = {
        "status": out.status,
        "theta": list(out.theta),
        "mu": list(out.mu),
        "outer_value": out.outer_value,
        "stats": out.stats,
        "certificates": [
            {"name": c.name, "lower": c.lower, "upper": c.upper, "passed": c.passed}
            for c in out.certificates
        ],
    }
    (OUT / "poly2d_synthesis.json").write_text(json.dumps(report, indent=1))

    cand = concrete_candidate(spec, out.theta, out.mu, out.gamma_c)
    for k, x0 in enumerate([(1.2, -0.4), (-1.1, 0.6), (0.2, 1.2)]):
        traj = rollout_filter(bundle.problem, cand, cand.policy, list(x0), 120)
        path = OUT / f"poly2d_traj_{k}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "x1", "x2", "u1", "u2", "margin"])
            for s in traj.steps:
                w.writerow([s.t, *s.state, *s.applied_input, s.margin])
        print(f"rollout from {x0}: {len(traj.steps)} steps -> {path}")


if __name__ == "__main__":
    main()
