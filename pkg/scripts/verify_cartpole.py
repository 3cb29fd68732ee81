#!/usr/bin/env python3
"""Cart-pole cross-check: verify the reference barrier with its reference
policy, then re-verify it with the policy withheld (the run assembles its
own piecewise-constant friend)."""

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
    bundle = builtin("cartpole")

    t0 = time.monotonic()
    out = verify_known(bundle.problem, bundle.candidate, VerifierConfig())
    print(f"known policy: {out.verdict} in {out.stats.iterations} iterations "
          f"({time.monotonic() - t0:.2f} s)")

    cand = Candidate(bundle.candidate.h, bundle.candidate.gamma, None)
    t0 = time.monotonic()
    out = verify_unknown(bundle.problem, cand, VerifierConfig())
    print(f"unknown policy: {out.verdict} in {out.stats.iterations} iterations "
          f"({time.monotonic() - t0:.2f} s), "
          f"{len(out.friend.pairs()) if out.friend else 0} friend pieces")
    cells = [
        {
            "id": r.id,
            "parent": r.parent,
            "bounds": r.box.bounds(),
            "status": r.status,
            "assigned_input": list(r.assigned_input) if r.assigned_input else None,
        }
        for r in out.stats.records
    ]
    path = OUT / "cartpole_unknown_cells.json"
    path.write_text(json.dumps(cells, indent=1), encoding="utf-8")
    print(f"cells written to {path}")


if __name__ == "__main__":
    main()
