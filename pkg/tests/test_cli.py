import json
import math
import subprocess
import sys

import numpy as np
import pytest

from emlaplace.cli import main
from emlaplace.report import RunReport, dumps


@pytest.fixture
def pts(tmp_path):
    p = tmp_path / "pts.csv"
    p.write_text("-1.2\n-0.8\n0.9\n1.1\n")
    return str(p)


@pytest.fixture
def coins(tmp_path):
    p = tmp_path / "coins.csv"
    p.write_text("3,10\n5,12\n1,4\n")
    return str(p)


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_fit_example(capsys, pts):
    code, out, _ = run(capsys, "fit", "--model", "gmm", "--components", "2", "--weights", "0.5,0.5",
                       "--variances", "1,1", "--data", pts, "--init-means", "-2,2")
    assert code == 0
    rep = json.loads(out)
    assert rep["em"]["converged"] and rep["em"]["reason"] in ("loglik-tol", "param-tol")
    # mode found by the straight-line EM script in test_em.py
    np.testing.assert_allclose(rep["theta_hat"], [-0.2594509, 0.2593186], atol=1e-5)
    assert rep["theta_hat"][0] < rep["theta_hat"][1]
    assert rep["data"]["records"] == 4


def test_fit_empty_file(capsys, tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text("")
    code, _, err = run(capsys, "fit", "--model", "gmm", "--data", str(p))
    assert code == 1 and "no records" in err


def test_fit_malformed_line_is_numbered(capsys, tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("1.0\n2.0\nabc\n")
    code, _, err = run(capsys, "fit", "--model", "gmm", "--data", str(p))
    assert code == 1 and "bad.csv:3" in err


def test_fit_bad_coin_record(capsys, tmp_path):
    p = tmp_path / "c.csv"
    p.write_text("3,10\n11,10\n")
    code, _, err = run(capsys, "fit", "--model", "coin", "--data", str(p))
    assert code == 1 and "c.csv:2" in err


def test_fit_zero_iterations(capsys, pts):
    code, out, _ = run(capsys, "fit", "--model", "gmm", "--data", pts, "--init-means", "-2,2", "--max-iters", "0")
    assert code == 2
    rep = json.loads(out)
    assert rep["em"]["iterations"] == 0 and rep["em"]["reason"] == "max-iters"
    assert rep["theta_hat"] == rep["theta_init"] == [-2.0, 2.0]


def test_fit_out_file(capsys, pts, tmp_path):
    dest = tmp_path / "r.json"
    code, out, _ = run(capsys, "fit", "--model", "gmm", "--data", pts, "--out", str(dest))
    assert code == 0 and out == ""
    assert json.loads(dest.read_text())["command"] == "fit"


def test_laplace_single_component_closed_form(capsys, tmp_path):
    p = tmp_path / "one.csv"
    p.write_text("0.7\n")
    code, out, _ = run(capsys, "laplace", "--model", "gmm", "--components", "1", "--variances", "2.5",
                       "--data", str(p), "--no-timings")
    assert code == 0
    rep = json.loads(out)
    assert rep["covariance"] == [[pytest.approx(2.5, abs=1e-12)]]
    assert rep["theta_hat"] == [pytest.approx(0.7, abs=1e-12)]


def test_laplace_fd_matches_dual(capsys, pts):
    reps = {}
    for s in ("dual", "fd", "complex"):
        code, out, _ = run(capsys, "laplace", "--model", "gmm", "--data", pts, "--init-means", "-2,2",
                           "--strategy", s, "--no-timings")
        assert code == 0
        reps[s] = np.array(json.loads(out)["covariance"])
    for s in ("fd", "complex"):
        rel = np.max(np.abs(reps[s] - reps["dual"])) / np.max(np.abs(reps["dual"]))
        assert rel <= 1e-5


def test_laplace_coin_evidence_vs_quadrature(capsys, coins):
    common = ["--model", "coin", "--components", "1", "--prior-var", "4", "--data", coins, "--no-timings"]
    code, out, _ = run(capsys, "laplace", *common)
    assert code == 0
    lap = json.loads(out)["log_evidence"]
    code, out, _ = run(capsys, "check", *common, "--quadrature", "--json")
    assert code == 0
    checks = {c["name"]: c for c in json.loads(out)["checks"]}
    quad = checks["quadrature-log-evidence"]["residual"]
    assert abs(lap - quad) <= 0.02 * abs(quad)
    assert checks["laplace-vs-quadrature"]["passed"]


def test_laplace_saddle_exit_3(capsys, tmp_path):
    p = tmp_path / "sym.csv"
    p.write_text("-2\n2\n")
    code, out, err = run(capsys, "laplace", "--model", "gmm", "--data", str(p), "--init-means", "0,0")
    assert code == 3
    assert "saddle" in err
    assert json.loads(out)["diagnostic"].startswith("saddle")


def test_laplace_not_converged_exit_2(capsys, pts):
    code, out, _ = run(capsys, "laplace", "--model", "gmm", "--data", pts, "--init-means", "-2,2",
                       "--max-iters", "3")
    assert code == 2
    assert json.loads(out)["covariance"] is None


def test_check_symmetric_fixture(capsys, tmp_path):
    p = tmp_path / "zero.csv"
    p.write_text("0\n")
    code, out, _ = run(capsys, "check", "--model", "gmm", "--data", str(p), "--init-means", "0,0", "--json")
    assert code == 0
    checks = {c["name"]: c for c in json.loads(out)["checks"]}
    assert checks["extra-term-norm"]["residual"] <= 1e-8
    assert all(c["passed"] for c in checks.values())


def test_check_four_points_text(capsys, pts):
    code, out, _ = run(capsys, "check", "--model", "gmm", "--data", pts, "--init-means", "-2,2")
    assert code == 0
    assert "FAIL" not in out and out.rstrip().endswith("all checks passed")
    assert "PASS  hessian-decomposition" in out


def test_check_perturbed_gradient_fails(capsys, pts):
    code, out, _ = run(capsys, "check", "--model", "gmm", "--data", pts, "--init-means", "-2,2",
                       "--perturb-grad", "1e-3")
    assert code == 4
    assert "FAIL  gradient-identity" in out


def test_report_round_trip(capsys, pts):
    code, out, _ = run(capsys, "laplace", "--model", "gmm", "--data", pts, "--prior-var", "10")
    assert code == 0
    rep = RunReport.loads(out)
    assert RunReport.loads(rep.dumps()) == rep
    assert rep.dumps() == out
    H = np.array(rep.hessian)
    np.testing.assert_array_equal(H, H.T)
    assert H.shape == (len(rep.theta_hat),) * 2


def test_float_format_is_lossless():
    vals = [0.1, 1.0, -2.0, 1e-300, math.pi, 123456789.123456789, 5e-324]
    text = dumps({"v": vals})
    assert json.loads(text)["v"] == vals
    assert "1.0" in text


def test_reproducible_and_thread_independent(capsys, tmp_path):
    p = tmp_path / "three.csv"
    rng = np.random.default_rng(0)
    p.write_text("".join(f"{float(v)!r}\n" for v in np.concatenate([rng.normal(-4, 1, 15), rng.normal(0, 1, 15),
                                                             rng.normal(5, 1, 15)])))
    base = ["laplace", "--model", "gmm", "--components", "3", "--prior-var", "25", "--data", str(p), "--no-timings"]
    outs = []
    for threads in ("1", "1", "4"):
        code, out, _ = run(capsys, *base, "--threads", threads)
        assert code == 0
        outs.append(out)
    assert outs[0] == outs[1] == outs[2]


def test_module_entry_point(pts):
    res = subprocess.run([sys.executable, "-m", "emlaplace", "fit", "--model", "gmm", "--data", pts,
                          "--no-timings"], capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["em"]["converged"]
