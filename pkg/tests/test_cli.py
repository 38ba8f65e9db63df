import json
import os
import subprocess
import sys

import pytest

from varipath import bundled_problem
from varipath.cli import run

BENCH = bundled_problem("bench_sinh")


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def bench_doc(**overrides):
    doc = json.loads(open(BENCH).read())
    doc.update(overrides)
    return doc


def test_estimate_prints_c(tmp_path, capsys):
    out = tmp_path / "e.json"
    assert run(["estimate", "--problem", BENCH, "--out", str(out)]) == 0
    lines = dict(l.split(" = ") for l in capsys.readouterr().out.splitlines())
    assert float(lines["c"]) == pytest.approx(5.0 / 3.0, abs=1e-12)
    rep = json.loads(out.read_text())
    assert rep["constants"]["provenance"]["c"]["method"] == "quadrature"
    assert rep["config"]["subcommand"] == "estimate"
    assert rep["validation"]["coercivity"]["passed"] is True


def test_solve_writes_report_and_trajectory(tmp_path):
    out, traj = tmp_path / "r.json", tmp_path / "t.csv"
    rc = run(["solve", "--problem", BENCH, "--epsilon", "0.1", "--N", "16", "--out", str(out), "--trajectory", str(traj)])
    assert rc == 0
    rep = json.loads(out.read_text())
    assert rep["solve"]["iterations"] <= rep["solve"]["predicted_N_iters"]
    assert rep["config"]["N"] == 16 and rep["config"]["epsilon"] == 0.1
    assert traj.read_text().splitlines()[0] == "t,x1,u1"


def test_missing_problem_is_a_usage_error(capsys):
    with pytest.raises(SystemExit) as info:
        run(["solve", "--epsilon", "0.1"])
    assert info.value.code == 1
    assert "usage:" in capsys.readouterr().err


@pytest.mark.parametrize("content", ["{not json", json.dumps({"n": 1, "family": "quad1"})])
def test_malformed_problem(tmp_path, content):
    p = tmp_path / "bad.json"
    p.write_text(content)
    assert run(["estimate", "--problem", str(p)]) == 1


def test_nonexistent_problem_file(tmp_path):
    assert run(["estimate", "--problem", str(tmp_path / "nope.json")]) == 1


def test_bad_flag_value():
    assert run(["solve", "--problem", BENCH, "--epsilon", "-1"]) == 1


def test_infeasible_problem(tmp_path):
    p = write(tmp_path, "inf.json", bench_doc(A=[[0.0]], b=[0.0], a=[0.0]))
    assert run(["solve", "--problem", p, "--N", "4", "--out", str(tmp_path / "r.json")]) == 2
    assert "error" in json.loads((tmp_path / "r.json").read_text())


def test_iteration_cap(tmp_path):
    out = tmp_path / "r.json"
    assert run(["solve", "--problem", BENCH, "--N", "8", "--max-iters", "2", "--out", str(out)]) == 3
    assert json.loads(out.read_text())["solve"]["iterations"] == 2


def test_validation_failure_and_skip(tmp_path):
    p = write(tmp_path, "mu2.json", bench_doc(family="power", params=[1.0, 1.0, 0.0, 2, 0.0], mu=2.0))
    out = tmp_path / "e.json"
    assert run(["estimate", "--problem", p, "--out", str(out)]) == 4
    rep = json.loads(out.read_text())
    assert rep["validation"]["strong_convexity_u"]["witness"] is not None
    assert run(["estimate", "--problem", p, "--skip-validation"]) == 0


def test_reports_are_byte_identical(tmp_path):
    out = tmp_path / "r.json"
    args = ["solve", "--problem", BENCH, "--epsilon", "0.5", "--N", "8", "--seed", "3", "--out", str(out)]
    assert run(args) == 0
    first = out.read_bytes()
    assert run(args) == 0
    assert out.read_bytes() == first
    assert json.loads(first)["config"]["seed"] == 3


def test_verify_subcommand(tmp_path, capsys):
    out = tmp_path / "v.json"
    assert run(["verify", "--epsilons", "0.5", "--N", "8", "--out", str(out)]) == 0
    assert capsys.readouterr().out.startswith("PASS")
    assert json.loads(out.read_text())["summary"]["passed"] is True


def test_thread_cap_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("VARIPATH_THREADS", "1")
    assert run(["estimate", "--problem", BENCH, "--no-analytic", "--grid", "11"]) == 0


def test_console_script():
    env = dict(os.environ, VARIPATH_THREADS="1")
    res = subprocess.run(
        [sys.executable, "-m", "varipath.cli", "estimate", "--problem", BENCH],
        capture_output=True,
        text=True,
        env=env,
    )
    assert res.returncode == 0
    assert "ell = " in res.stdout
