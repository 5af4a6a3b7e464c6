import hashlib
import json
import subprocess
import sys

import numpy as np
import pytest

from photonic_svd.cli import CliError, main, read_matrix


def run(argv, capsys):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


@pytest.fixture
def golden(tmp_path):
    p = tmp_path / "a.csv"
    p.write_text("# 2 2\n1,1\n0,1\n")
    return p


def test_read_matrix(tmp_path):
    p = tmp_path / "m.csv"
    p.write_text("1, 2,3\n\n4,5,6\n")
    np.testing.assert_array_equal(read_matrix(p), [[1, 2, 3], [4, 5, 6]])
    p.write_text("1,2\n3\n")
    with pytest.raises(CliError, match=":2:"):
        read_matrix(p)
    p.write_text("1,x\n")
    with pytest.raises(CliError, match=":1:"):
        read_matrix(p)
    p.write_text("# 3 3\n1,2\n")
    with pytest.raises(CliError, match="header"):
        read_matrix(p)
    p.write_text("1,inf\n")
    with pytest.raises(CliError):
        read_matrix(p)
    with pytest.raises(CliError):
        read_matrix(tmp_path / "missing.csv")


def test_decompose_identity(tmp_path, capsys):
    p = tmp_path / "i.csv"
    p.write_text("\n".join(",".join("1" if i == j else "0" for j in range(4)) for i in range(4)))
    code, out, _ = run(["decompose", "--input", p], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["sigma"] == [1.0] * 4 and doc["iterations"] == 0


def test_decompose_golden_ratio(golden, tmp_path, capsys):
    out_file = tmp_path / "res.json"
    code, _, _ = run(["decompose", "--alg", "grk-svd", "--input", golden, "--out", out_file,
                      "--emit-factors", tmp_path / "f"], capsys)
    assert code == 0
    doc = json.loads(out_file.read_text())
    np.testing.assert_allclose(doc["sigma"], [1.618034, 0.618034], atol=1e-6)
    assert json.loads(json.dumps(doc)) == doc
    for key in ("algorithm", "mode", "m", "n", "iterations", "residual", "counters", "time_units",
                "seconds", "energy_pj", "seed", "version"):
        assert key in doc
    U = read_matrix(tmp_path / "f" / "U.csv")
    s = read_matrix(tmp_path / "f" / "sigma.csv").ravel()
    V = read_matrix(tmp_path / "f" / "V.csv")
    np.testing.assert_allclose((U * s) @ V.T, [[1, 1], [0, 1]], atol=1e-12)


@pytest.mark.parametrize("mode", ["dsc", "dmc", "hybrid"])
@pytest.mark.parametrize("alg", ["qr-svd", "grk-svd"])
def test_decompose_random_all_modes(alg, mode, capsys):
    code, out, _ = run(["decompose", "--alg", alg, "--mode", mode, "--m", 5, "--n", 4], capsys)
    doc = json.loads(out)
    assert code == 0 and doc["converged"] and doc["seed"] is not None
    assert (doc["counters"]["chip_op"] > 0) == (mode == "hybrid")


def test_decompose_exit_codes(golden, capsys):
    assert run(["decompose", "--input", golden, "--tol", -1], capsys)[0] == 1
    assert run(["decompose"], capsys)[0] == 1
    assert run(["decompose", "--input", "/nonexistent.csv"], capsys)[0] == 1
    assert run(["decompose", "--alg", "nope"], capsys)[0] == 1
    assert run(["decompose", "--m", 8, "--n", 8, "--max-iters", 1], capsys)[0] == 2


def test_count_examples(capsys):
    code, out, _ = run(["count", "--alg", "qr-svd", "--mode", "hybrid", "--m", 2, "--n", 2,
                        "--iters", 1, "--analytic"], capsys)
    c = json.loads(out)["counters"]
    assert code == 0 and (c["chip_config"], c["chip_op"]) == (4, 16)
    code, out, _ = run(["count", "--alg", "grk-svd", "--mode", "hybrid", "--m", 3, "--n", 3,
                        "--phase", "bidiag"], capsys)
    c = json.loads(out)["counters"]
    assert (c["chip_config"], c["chip_op"]) == (6, 36)


def test_count_instrumented_matches_analytic(capsys):
    _, out, _ = run(["count", "--alg", "qr-svd", "--mode", "hybrid", "--m", 5, "--n", 5,
                     "--instrumented", "--seed", 4], capsys)
    doc = json.loads(out)
    C = doc["iterations"]
    _, out, _ = run(["count", "--alg", "qr-svd", "--mode", "hybrid", "--m", 5, "--n", 5, "--iters", C], capsys)
    ana = json.loads(out)["counters"]
    assert doc["counters"]["chip_config"] == ana["chip_config"]
    assert doc["counters"]["chip_op"] == ana["chip_op"]


def test_count_domain_errors(capsys):
    assert run(["count", "--m", 2, "--n", 3], capsys)[0] == 1
    assert run(["count", "--m", 3, "--n", 3, "--iters", 0], capsys)[0] == 1
    assert run(["count", "--alg", "qr-svd", "--m", 3, "--n", 3, "--phase", "bidiag"], capsys)[0] == 1


def test_cost_report(tmp_path, capsys):
    code, out, _ = run(["cost", "--alg", "grk-svd", "--mode", "hybrid", "--n", 8], capsys)
    assert code == 0
    lines = {ln.split()[0]: ln.split() for ln in out.splitlines() if ln.strip()}
    assert lines["chip_op"][2] == "12.5"
    assert lines["chip_config"][3] == "35840"
    assert "iterations = 13" in out
    base = dict(ln.split(" = ") for ln in out.splitlines() if " = " in ln)

    t = tmp_path / "t.txt"
    t.write_text("chip_config = 1000000\n")
    _, out, _ = run(["cost", "--alg", "grk-svd", "--mode", "hybrid", "--n", 8, "--tables", t], capsys)
    over = dict(ln.split(" = ") for ln in out.splitlines() if " = " in ln)
    assert float(over["seconds"]) > float(base["seconds"])
    assert over["energy_pj"] == base["energy_pj"]


def test_cost_env_tables_and_errors(tmp_path, capsys, monkeypatch):
    t = tmp_path / "t.txt"
    t.write_text("chip_op = 100\n")
    monkeypatch.setenv("PHOTONIC_SVD_TABLES", str(t))
    _, out, _ = run(["cost", "--mode", "hybrid", "--n", 8], capsys)
    assert [ln for ln in out.splitlines() if ln.startswith("chip_op")][0].split()[2] == "25"
    t.write_text("chip_ops = 100\n")
    code, _, err = run(["cost", "--n", 8, "--tables", t], capsys)
    assert code == 1 and "chip_ops" in err
    assert run(["cost", "--n", 2], capsys)[0] == 1
    assert run(["cost", "--n", 8, "--tables", tmp_path / "none.txt"], capsys)[0] == 1
    monkeypatch.delenv("PHOTONIC_SVD_TABLES")
    _, out, _ = run(["cost", "--n", 8, "--fit", "0,1"], capsys)
    assert "iterations = 1" in out


def test_experiment_iterations_deterministic(tmp_path, capsys):
    digests = []
    for d in ("a", "b"):
        code, out, _ = run(["experiment", "iterations", "--sizes", "5:10", "--trials", 20,
                            "--seed", 11, "--out", tmp_path / d], capsys)
        assert code == 0 and "slope = " in out
        digests.append(hashlib.sha256((tmp_path / d / "iterations.csv").read_bytes()).hexdigest())
    assert digests[0] == digests[1]


def test_experiment_trace_and_sweep(tmp_path, capsys):
    assert run(["experiment", "trace", "--trials", 10, "--out", tmp_path], capsys)[0] == 0
    rows = np.loadtxt(tmp_path / "trace.csv", delimiter=",", skiprows=1)
    last = {int(t): e for t, _, e in rows}
    assert sorted(last) == list(range(10)) and max(last.values()) <= 1e-6

    assert run(["experiment", "sweep", "--sizes", "8:256:8", "--out", tmp_path], capsys)[0] == 0
    text = (tmp_path / "costs.csv").read_text().splitlines()
    assert text[0] == "n,algorithm,mode,time_seconds,energy_pj"
    energy = {(r.split(",")[1], r.split(",")[2]): float(r.split(",")[4]) for r in text if r.startswith("256,")}
    assert energy[("grk-svd", "hybrid")] < energy[("grk-svd", "dsc")]


def test_experiment_selfcheck(tmp_path, capsys):
    code, out, _ = run(["experiment", "selfcheck", "--sizes", "8", "--trials", 1, "--out", tmp_path], capsys)
    assert code == 0 and "ratio[8]" in out
    assert (tmp_path / "selfcheck.csv").read_text().startswith("n,predicted_units,measured_seconds,ratio\n")


def test_experiment_bad_output(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert run(["experiment", "trace", "--trials", 1, "--out", blocker / "sub"], capsys)[0] == 1
    assert run(["experiment", "iterations", "--sizes", "5", "--trials", 1, "--out", tmp_path], capsys)[0] == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "photonic_svd", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
