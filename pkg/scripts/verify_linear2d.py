#!/usr/bin/env python3
"""Verification runs for the linear2d case study.

Known-policy mode falsifies the reference candidate/policy pair with an
exact counterexample; unknown-policy mode then certifies the same
candidate as valid by synthesizing a piecewise-constant friend, writing
the subdomain cells for plotting.
"""

import json
import pathlib
import sys
import time

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from dtcbf import builtin
from dtcbf.verifier import Candidate, VerifierConfig, verify_known, verify_unknown

OUT = pathlib.Path(__file__).resolve().parents[1] / "results"


def main():
    OUT.mkdir(exist_ok=True)
    bundle = builtin("linear2d")

    t0 = time.monotonic()
    out = verify_known(bundle.problem, bundle.candidate, VerifierConfig())
    print(f"known policy: {out.verdict} in {out.stats.iterations} iterations "
          f"({time.monotonic() - t0:.2f} s)")
    if out.counterexample is not None:
        print(f"  counterexample: {list(out.counterexample)}")

    cand = Candidate(bundle.candidate.h, bundle.candidate.gamma, None)
    cfg = VerifierConfig(eps_f=1e-4, eps_h=1e-4, eps_d=1e-4)
    t0 = time.monotonic()
    out = verify_unknown(bundle.problem, cand, cfg)
    print(f"unknown policy: {out.verdict} in {out.stats.iterations} iterations "
          f"({time.monotonic() - t0:.1f} s), "
          f"{len(out.friend.pairs()) if out.friend else 0} friend pieces")
    cells = [
        {
            "id": r.id,
            "parent": r.parent,
            "bounds": r.box.bounds(),
            "status": r.status,
            "assigned_input": list(r.assigned_input) if r.assigned_input else None,
            "relaxation_value": r.relaxation_value,
        }
        for r in out.stats.records
    ]
    path = OUT / "linear2d_unknown_cells.json"
    path.write_text(json.dumps(cells, indent=1), encoding="utf-8")
    print(f"cells written to {path}")


if __name__ == "__main__":
    main()
