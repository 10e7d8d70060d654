import json
import subprocess
import sys

import pytest

from thincond import cli
from thincond import serialize as sz


def body(text):
    rep = json.loads(text)
    rep.pop("timing")
    return rep


def run(capsys, *argv):
    code = cli.run(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def test_condense_writes_file(tmp_path, capsys):
    path = tmp_path / "q.json"
    code, _, _ = run(capsys, "condense", "--dist", "poisson:lambda=2", "--thinning", "independent:q=0.5",
                     "--nmax", "80", "--out", str(path))
    assert code == 0
    rep = json.loads(path.read_text())
    assert rep["passed"] and rep["verdicts"]["closed_form"]
    assert rep["results"]["condensation"]["n_max"] == 80
    assert set(rep) == {"command", "inputs", "inputs_digest", "results", "verdicts", "passed", "timing"}


def test_reconstruct_from_file_roundtrip(tmp_path, capsys):
    path = tmp_path / "q.json"
    run(capsys, "condense", "--dist", "poisson:lambda=2", "--thinning", "independent:q=0.5", "--nmax", "80", "--out", str(path))
    rep = json.loads(path.read_text())
    qfile = tmp_path / "matrix.json"
    qfile.write_text(json.dumps(rep["results"]["condensation"]))
    code, out, _ = run(capsys, "reconstruct", "--thinning", "independent:q=0.5", "--condensation", str(qfile))
    assert code == 0
    assert json.loads(out)["verdicts"]["cycle"]


def test_reconstruct_from_dist(capsys):
    code, out, _ = run(capsys, "reconstruct", "--thinning", "independent:q=0.5",
                       "--condensation-from", "poisson:lambda=2", "--nmax", "80")
    rep = json.loads(out)
    assert code == 0 and rep["results"]["tv_to_source"] < 1e-9


def test_verify_balance_point_mass(capsys):
    code, out, _ = run(capsys, "verify-balance", "--dist", "pointmass:m=0", "--thinning", "uniform")
    assert code == 0 and json.loads(out)["results"]["detailed_balance"] == []


@pytest.mark.parametrize("cmd", ["thin", "split", "papangelou", "verify-ibp", "verify-cycle"])
def test_dist_commands_pass(capsys, cmd):
    code, out, _ = run(capsys, cmd, "--dist", "negbinomial:r=2,p=0.3", "--thinning", "independent:q=0.5")
    assert code == 0 and json.loads(out)["passed"]


def test_precondition_failure_is_verdict(capsys):
    code, out, _ = run(capsys, "verify-ibp", "--dist", "custom:weights=0.5;0;0.5", "--thinning", "independent:q=0.5")
    rep = json.loads(out)
    assert code == 1 and rep["verdicts"] == {"preconditions": False}


def test_non_invertible_thinning_fails_roundtrip(capsys):
    code, out, _ = run(capsys, "reconstruct", "--thinning", "all_or_nothing:q=0.3",
                       "--condensation-from", "poisson:lambda=2", "--nmax", "40")
    assert code == 1 and not json.loads(out)["verdicts"]["roundtrip"]


def test_cycle_violation_reported(tmp_path, capsys):
    path = tmp_path / "q.json"
    run(capsys, "condense", "--dist", "poisson:lambda=2", "--thinning", "independent:q=0.3", "--nmax", "30", "--out", str(path))
    m = json.loads(path.read_text())["results"]["condensation"]
    m["entries"][0][1] *= 1.01
    s = sum(m["entries"][0])
    m["entries"][0] = [x / s for x in m["entries"][0]]
    m["row_deficit"] = [0.0] * len(m["row_deficit"])
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(m))
    code, out, _ = run(capsys, "reconstruct", "--thinning", "independent:q=0.3", "--condensation", str(bad))
    rep = json.loads(out)
    assert code == 1 and rep["verdicts"] == {"cycle": False} and rep["results"]["violation"] > 1e-4


@pytest.mark.parametrize("argv", [
    ["condense", "--dist", "poisson:lambda=-1", "--thinning", "uniform"],
    ["condense", "--dist", "poisson:lambda=2", "--thinning", "sideways"],
    ["condense", "--dist", "powerlaw:alpha=2", "--thinning", "uniform"],
    ["reconstruct", "--thinning", "uniform", "--condensation", "/nonexistent.json"],
    ["pp-mc", "thin-poisson", "--kernel", "uniform", "--samples", "10"],
    ["bogus"],
])
def test_input_errors_exit_2(capsys, argv):
    code, out, err = run(capsys, *argv)
    assert code == 2 and out == "" and err.strip()


def test_auto_window_error_suggests_nmax(capsys):
    _, _, err = run(capsys, "condense", "--dist", "powerlaw:alpha=2", "--thinning", "uniform")
    assert "--nmax" in err


@pytest.mark.parametrize("action", ["condense", "palm-check", "ibp", "cycle", "reconstruct"])
def test_pp_exact(capsys, action):
    code, out, _ = run(capsys, "pp-exact", action, "--space", "1;2", "--measure", "random:seed=4",
                       "--kernel", "uniform", "--nmax", "3")
    assert code == 0 and json.loads(out)["command"] == f"pp-exact {action}"


def test_pp_exact_counterexample(capsys):
    code, out, _ = run(capsys, "pp-exact", "ibp", "--space", "1", "--measure", "pointmass:counts=2", "--nmax", "3")
    assert code == 1 and json.loads(out)["verdicts"] == {"preconditions": False}


def test_pp_mc(capsys):
    code, out, _ = run(capsys, "pp-mc", "ibp", "--process", "poisson:rate=3,d=1", "--samples", "500", "--seed", "2")
    rep = json.loads(out)
    assert code == 0 and rep["results"]["n_samples"] == 500
    code, out, _ = run(capsys, "pp-mc", "thin-poisson", "--samples", "500", "--seed", "2")
    assert code == 0 and set(json.loads(out)["verdicts"]) == {"kept_mean", "kept_removed_covariance", "count_chi2"}


def test_determinism(capsys):
    argv = ["pp-mc", "ibp", "--process", "mixed:alpha=2", "--kernel", "uniform", "--samples", "300", "--seed", "7"]
    _, a, _ = run(capsys, *argv)
    _, b, _ = run(capsys, *argv)
    assert body(a) == body(b)
    assert sz.dumps(body(a)) == sz.dumps(body(b))
    assert json.loads(a)["inputs_digest"] == json.loads(b)["inputs_digest"]


def test_digest_tracks_inputs(capsys):
    _, a, _ = run(capsys, "thin", "--dist", "poisson:lambda=2", "--thinning", "uniform")
    _, b, _ = run(capsys, "thin", "--dist", "poisson:lambda=3", "--thinning", "uniform")
    assert json.loads(a)["inputs_digest"] != json.loads(b)["inputs_digest"]


def test_csv_output(capsys):
    code, out, _ = run(capsys, "thin", "--dist", "binomial:r=3,p=0.5", "--thinning", "uniform", "--format", "csv")
    lines = out.splitlines()
    assert code == 0 and lines[0] == "n,law,thinned_law" and len(lines) == 5


def test_job_file(tmp_path, capsys):
    job = tmp_path / "job.json"
    job.write_text(json.dumps({"command": "pp-exact", "action": "ibp", "space": "1;1", "n_max": 3}))
    code, out, _ = run(capsys, "report", "--job", str(job))
    assert code == 0 and json.loads(out)["command"] == "pp-exact ibp"
    job.write_text(json.dumps({"command": "thin", "dist": "poisson:lambda=1", "extra": 1}))
    code, _, err = run(capsys, "report", "--job", str(job))
    assert code == 2 and "extra" in err
    job.write_text(json.dumps({"command": "pp-exact"}))
    assert run(capsys, "report", "--job", str(job))[0] == 2


def test_report_battery_without_mc(capsys):
    code, out, _ = run(capsys, "report", "--no-mc")
    rep = json.loads(out)
    assert code == 0 and len(rep["verdicts"]) == 8 and all(rep["verdicts"].values())
    assert set(rep["timing"]) == set(rep["verdicts"]) | {"wall_clock_s"}


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "thincond", "verify-cycle", "--dist", "poisson:lambda=1",
                          "--thinning", "independent:q=0.5"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["passed"]
