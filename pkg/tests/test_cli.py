import csv
import io
import json

import pytest

from akflow.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr().out
    return code, out


def test_selftest(capsys):
    code, out = run(capsys, "selftest")
    rep = json.loads(out)
    assert code == 0 and rep["pass"]
    assert "nijenhuis_c" in rep["conventions"]


def test_cartan_cr_file(tmp_path, capsys):
    path = tmp_path / "cr.json"
    path.write_text(json.dumps({"n": 2, "m": 2, "generators": [[["1", "0"], ["0", "1"]], [["0", "1"], ["-1", "0"]]]}))
    code, out = run(capsys, "cartan", "--tableau", str(path), "--seed", "7", "--trials", "20")
    rep = json.loads(out)["report"]
    assert code == 0 and rep["characters"] == [2, 0] and rep["involutive"]


def test_cartan_malformed(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text('{"n": 2}')
    code, out = run(capsys, "cartan", "--tableau", str(path))
    assert code == 2 and json.loads(out)["kind"] == "configuration"


def test_flow_csv(tmp_path, capsys):
    out = tmp_path / "traj.csv"
    code, _ = run(capsys, "flow", "--space", "affine", "--a", "1", "--b", "1", "--T", "1", "--dt", "1e-2",
                  "--out", str(out))
    rows = list(csv.reader(io.StringIO(out.read_text())))
    assert code == 0
    head, last = rows[0], rows[-1]
    q = float(last[head.index("omega_23")])
    assert abs(float(last[0]) - 1.0) <= 1e-12 and abs(q - 5.0) <= 1e-6


def test_flow_bad_params(capsys):
    code, out = run(capsys, "flow", "--space", "abelian", "--a", "2")
    assert code == 2
    code, out = run(capsys, "flow", "--space", "affine", "--T", "-1")
    assert code == 2


def test_soliton_check_exit_codes(capsys):
    assert run(capsys, "soliton-check", "--space", "affine")[0] == 0
    assert run(capsys, "soliton-check", "--space", "hyperbolic_product", "--static")[0] == 0
    assert run(capsys, "soliton-check", "--space", "kodaira_thurston")[0] == 1
    code, out = run(capsys, "soliton-check", "--space", "affine", "--gradient")
    assert code == 2 and json.loads(out)["error"] == "EmptyCandidateSpace"


def test_static_verify(capsys):
    code, out = run(capsys, "static-verify", "--h", "num=[1,0.5];den=[1]", "--samples", "5", "--seed", "7")
    assert code == 0 and json.loads(out)["pass"]
    code, out = run(capsys, "static-verify", "--chart", "darboux", "--samples", "2")
    assert code == 1 and not json.loads(out)["pass"]


def test_static_length(capsys):
    code, out = run(capsys, "static-length", "--h", "num=[1]", "--dir", "1,0")
    rep = json.loads(out)
    assert code == 0 and abs(rep["length"] - 1.5707963267948966) <= 1e-6
    code, out = run(capsys, "static-length", "--h", "num=[-0.5,1]")
    assert code == 2 and json.loads(out)["error"] == "PathThroughSingularity"


def test_invariants_point_forms(capsys, tmp_path):
    code, out = run(capsys, "invariants", "--chart", "darboux", "--point", "0.1,0.2,-0.3,0.05")
    rep = json.loads(out)
    assert code == 0 and len(rep["points"]) == 1
    spec = tmp_path / "chart.json"
    spec.write_text(json.dumps({"chart": "static", "params": {"num": [1, 0.5]}}))
    code, out2 = run(capsys, "invariants", "--chart", str(spec), "--point", "0.2", "0.1", "0", "0")
    assert code == 0


@pytest.mark.parametrize("argv", [
    ["invariants"],
    ["invariants", "--chart", "nope", "--point", "0,0,0,0"],
    ["invariants", "--chart", "flat", "--point", "0,0,0"],
    ["static-verify", "--h", "num=[1]", "--tol", "rho=-1"],
    ["static-verify", "--h", "num=[1]", "--tol", "rho"],
    ["static-verify", "--h", "den=[1]"],
    ["cartan"],
])
def test_configuration_errors(capsys, argv):
    code, out = run(capsys, *argv)
    assert code == 2 and json.loads(out)["pass"] is False


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as info:
        main(["selftest", "--bogus"])
    assert info.value.code == 2


def test_seed_environment(monkeypatch, capsys):
    monkeypatch.setenv("AKFLOW_SEED", "7")
    a = run(capsys, "static-verify", "--h", "num=[1]", "--samples", "3")[1]
    b = run(capsys, "static-verify", "--h", "num=[1]", "--samples", "3", "--seed", "7")[1]
    assert a == b and json.loads(a)["seed"] == 7
    monkeypatch.setenv("AKFLOW_SEED", "x")
    assert run(capsys, "static-verify", "--h", "num=[1]", "--samples", "3")[0] == 2


def test_determinism(capsys):
    a = run(capsys, "invariants", "--chart", "darboux", "--samples", "2", "--seed", "5")[1]
    b = run(capsys, "invariants", "--chart", "darboux", "--samples", "2", "--seed", "5")[1]
    assert a == b


def test_console_script():
    import subprocess
    import sys

    res = subprocess.run([sys.executable, "-m", "akflow.cli", "cartan", "--cr"], capture_output=True, text=True)
    assert res.returncode == 0 and json.loads(res.stdout)["report"]["characters"] == [2, 0]
