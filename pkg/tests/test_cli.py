import csv
import json

import pytest

from dtcbf.cli import main

TOY = """
[system]
n = 1
m = 1
f1 = 0.5*x1 + 0.1*u1

[input]
u1 = -1, 1

[safe]
s = 4 - x1^2

[candidate]
h = 1 - x1^2
gamma = lin 0.5
pi1 = 0

[search]
x1 = -1.5, 1.5

[synthesis]
h_template = 1 - t1*x1^2
pi1_template = m1*x1
theta1 = 0.25, 2
mu1 = -0.4, 0.4
gamma = lin 0.5
outer_objective = t1
admissibility = symmetric_square
safe_subset = direct
eps_f = 1e-3
eps_F = 0.05
"""

BAD_CANDIDATE = TOY.replace("f1 = 0.5*x1 + 0.1*u1", "f1 = 2*x1 + 0.01*u1")


@pytest.fixture
def toy_file(tmp_path):
    p = tmp_path / "toy.prob"
    p.write_text(TOY, encoding="utf-8")
    return str(p)


@pytest.fixture
def bad_file(tmp_path):
    p = tmp_path / "bad.prob"
    p.write_text(BAD_CANDIDATE, encoding="utf-8")
    return str(p)


class TestVerifyCommand:
    def test_valid_exit_zero(self, toy_file, tmp_path, capsys):
        out = tmp_path / "report.json"
        cells = tmp_path / "cells.json"
        code = main([
            "verify", "--problem", toy_file, "--mode", "known",
            "--out", str(out), "--cells", str(cells),
        ])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["verdict"] == "valid"
        assert report["config"]["mode"] == "known"
        recs = json.loads(cells.read_text())
        assert recs[0]["id"] == 0
        assert all(set(r) >= {"id", "parent", "bounds", "status"} for r in recs)

    def test_falsified_exit_two(self, bad_file, tmp_path):
        out = tmp_path / "report.json"
        code = main(["verify", "--problem", bad_file, "--mode", "known", "--out", str(out)])
        assert code == 2
        report = json.loads(out.read_text())
        assert report["verdict"] == "falsified_exact"
        assert report["counterexample"] is not None

    def test_unknown_mode_valid(self, toy_file, tmp_path):
        out = tmp_path / "report.json"
        code = main(["verify", "--problem", toy_file, "--mode", "unknown", "--out", str(out)])
        assert code == 0
        report = json.loads(out.read_text())
        assert report["friend_pieces"] >= 1

    def test_budget_exit_four(self, tmp_path):
        # boundary-tight candidate (margin == h) cannot resolve in 2 boxes
        text = TOY.replace("f1 = 0.5*x1 + 0.1*u1", "f1 = x1").replace(
            "gamma = lin 0.5", "gamma = id"
        )
        p = tmp_path / "tight.prob"
        p.write_text(text, encoding="utf-8")
        code = main([
            "verify", "--problem", str(p), "--mode", "known",
            "--eps-f", "1e-12", "--eps-h", "1e-12", "--budget-iters", "2",
        ])
        assert code == 4

    def test_missing_candidate_exit_one(self, tmp_path):
        p = tmp_path / "nocand.prob"
        p.write_text(
            "[system]\nn = 1\nm = 1\nf1 = x1\n[input]\nu1 = -1, 1\n[search]\nx1 = -1, 1\n",
            encoding="utf-8",
        )
        assert main(["verify", "--problem", str(p)]) == 1

    def test_missing_file_exit_one(self):
        assert main(["verify", "--problem", "/nonexistent/x.prob"]) == 1

    def test_report_roundtrip(self, toy_file, tmp_path):
        out1 = tmp_path / "r1.json"
        out2 = tmp_path / "r2.json"
        assert main(["verify", "--problem", toy_file, "--out", str(out1)]) == 0
        r1 = json.loads(out1.read_text())
        cfg = r1["config"]
        args = [
            "verify", "--problem", cfg["problem"], "--mode", cfg["mode"],
            "--eps-f", str(cfg["eps_f"]), "--eps-h", str(cfg["eps_h"]),
            "--eps-d", str(cfg["eps_d"]), "--out", str(out2),
        ]
        assert main(args) == 0
        r2 = json.loads(out2.read_text())
        assert r1["verdict"] == r2["verdict"]
        assert r1["stats"]["iterations"] == r2["stats"]["iterations"]


class TestCheckSafeCommand:
    def test_holds(self, toy_file, tmp_path):
        out = tmp_path / "r.json"
        assert main(["check-safe", "--problem", toy_file, "--out", str(out)]) == 0
        assert json.loads(out.read_text())["status"] == "holds"

    def test_violated(self, tmp_path):
        text = TOY.replace("s = 4 - x1^2", "s = -x1")
        p = tmp_path / "viol.prob"
        p.write_text(text, encoding="utf-8")
        code = main(["check-safe", "--problem", str(p)])
        assert code == 2


class TestMinimizeCommand:
    def test_margin_known(self, toy_file, tmp_path):
        out = tmp_path / "r.json"
        code = main([
            "minimize", "--problem", toy_file, "--target", "margin-known",
            "--eps-c", "1e-6", "--out", str(out),
        ])
        assert code == 0
        r = json.loads(out.read_text())
        assert r["status"] == "converged"
        assert r["certified_gap"] <= 1e-6 + 1e-12
        # margin = 0.5 h(x) - (h(f) - h)... minimum over the candidate set
        # for x+ = x/2: h(x/2) - h(x) + 0.5 h(x) >= 0 everywhere on [-1, 1]
        assert r["lower_bound"] <= r["upper_bound"]

    def test_safe_target(self, toy_file, tmp_path):
        out = tmp_path / "r.json"
        code = main(["minimize", "--problem", toy_file, "--target", "safe", "--out", str(out)])
        assert code == 0
        r = json.loads(out.read_text())
        # min of 4 - x^2 over the candidate set [-1, 1] is 3
        assert r["upper_bound"] == pytest.approx(3.0, abs=1e-5)


class TestRolloutCommand:
    def test_csv_written(self, toy_file, tmp_path):
        csv_path = tmp_path / "traj.csv"
        code = main([
            "rollout", "--problem", toy_file, "--x0", "0.9", "--steps", "20",
            "--out", str(csv_path),
        ])
        assert code == 0
        with open(csv_path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 20
        assert all(float(r["h"]) >= 0.0 for r in rows)
        assert all(float(r["margin"]) >= 0.0 for r in rows)

    def test_builtin_hundred_steps(self, tmp_path):
        csv_path = tmp_path / "poly2d.csv"
        code = main([
            "rollout", "--problem", "poly2d", "--x0", "0.95,0.45", "--steps", "100",
            "--out", str(csv_path),
        ])
        assert code == 0
        with open(csv_path) as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 100
        assert all(float(r["h"]) >= 0.0 for r in rows)

    def test_infeasible_exit_two(self, bad_file, tmp_path):
        code = main([
            "rollout", "--problem", bad_file, "--x0", "0.9", "--steps", "5",
            "--out", str(tmp_path / "t.csv"),
        ])
        assert code == 2

    def test_bad_x0_dimension(self, toy_file):
        assert main(["rollout", "--problem", toy_file, "--x0", "0.1,0.2", "--steps", "2"]) == 1


class TestSynthesizeCommand:
    def test_found_exit_zero(self, toy_file, tmp_path):
        out = tmp_path / "r.json"
        code = main([
            "synthesize", "--problem", toy_file, "--budget-iters", "4000",
            "--out", str(out),
        ])
        assert code == 0
        r = json.loads(out.read_text())
        assert r["status"] == "found"
        assert r["crosscheck"] == "valid"
        assert r["theta"][0] <= 0.5
        assert all(c["passed"] for c in r["certificates"])

    def test_missing_synthesis_section_exit_one(self, tmp_path):
        p = tmp_path / "nos.prob"
        p.write_text(TOY.split("[synthesis]")[0], encoding="utf-8")
        assert main(["synthesize", "--problem", str(p)]) == 1
