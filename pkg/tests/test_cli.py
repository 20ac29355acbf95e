import json
import math

import numpy as np
import pytest

from tailinv.cli import emit_plot_data, run
from tailinv.io import read_batch, read_csv


def _run_json(capsys, argv):
    code = run(argv)
    out = capsys.readouterr()
    return code, (json.loads(out.out) if code == 0 and out.out else None), out.err


def _dump(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def test_check_plus_minus(capsys):
    code, rep, _ = _run_json(capsys, ["check", "--weights", "1,-1", "--alpha", "1"])
    assert code == 0
    assert rep["status"] == "Refuted" and rep["condition"] == "eq3.4"
    assert rep["witness_theta"] == [0.0]
    assert rep["schema_version"] == 1


def test_check_one_half_half(capsys):
    code, rep, _ = _run_json(capsys, ["check", "--weights", "1,0.5,0.5", "--alpha", "1", "--theta-max", "6"])
    assert code == 0
    assert rep["witness_theta"][0] == pytest.approx(math.pi / math.log(2), abs=1e-6)


def test_check_other_inputs(capsys, tmp_path):
    code, rep, _ = _run_json(capsys, ["check", "--uniform=-1,1", "--alpha", "1"])
    assert code == 0 and rep["status"] == "Refuted" and rep["condition"] == "eq4.3"
    law = _dump(tmp_path / "law.json", {"dim": 1, "atoms": [{"x": [2.0], "m": 0.9}, {"x": [-1.0], "m": 0.1}]})
    code, rep, _ = _run_json(capsys, ["check", "--law", law, "--alpha", "1"])
    assert code == 0 and rep["status"] == "Certified"
    fam = _dump(tmp_path / "fam.json", {"kind": "diag", "dim": 2, "entries": [[0.5**l, (-0.3) ** l] for l in range(20)]})
    code, rep, _ = _run_json(capsys, ["check", "--family", fam, "--alpha", "1.5"])
    assert code == 0 and rep["status"] == "Certified"
    rho = _dump(tmp_path / "rho.json", {"dim": 1, "atoms": [{"x": [1.0], "m": 1.0}, {"x": [0.5], "m": 2.0}]})
    code, rep, _ = _run_json(capsys, ["check", "--rho", rho, "--alpha", "1", "--theta-max", "6"])
    assert code == 0 and rep["status"] == "Refuted"


def test_usage_errors_exit_1(capsys, tmp_path):
    assert run(["check", "--alpha", "1"]) == 1
    assert run(["check", "--weights", "1,x", "--alpha", "1"]) == 1
    assert run(["check", "--weights", "1", "--alpha", "nope"]) == 1
    assert run(["no-such-command"]) == 1
    assert run([]) == 1
    assert run(["check", "--weights", "0,0", "--alpha", "1"]) == 1
    assert run(["invert", "--family", str(tmp_path / "missing.json"), "--muX", "x", "--set", "y"]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert run(["forward", "--muZ", str(bad), "--family", str(bad)]) == 1
    err = capsys.readouterr().err
    assert "error" in err


def _geometric_files(tmp_path):
    fam = _dump(tmp_path / "fam.json", {"kind": "matrices", "dim": 2, "entries": [np.eye(2).tolist(), (0.5 * np.eye(2)).tolist()]})
    muX = _dump(tmp_path / "mux.json", {"dim": 2, "alpha": 1.0, "spectral": [{"dir": [1.0, 0.0], "w": 1.5}]})
    B = _dump(tmp_path / "B.json", {"type": "norm_exceed", "radius": 1.0})
    return fam, muX, B


def test_invert_geometric(capsys, tmp_path):
    fam, muX, B = _geometric_files(tmp_path)
    code, rep, _ = _run_json(capsys, ["invert", "--family", fam, "--muX", muX, "--set", B, "--tol", "1e-8"])
    assert code == 0
    assert abs(rep["value"] - 1.0) <= rep["tail_bound"]
    assert rep["certificate"]["feasible"]


def test_invert_infeasible_exit_2(capsys, tmp_path):
    _, muX, B = _geometric_files(tmp_path)
    fam = _dump(tmp_path / "fam_bad.json", {"kind": "matrices", "dim": 2, "entries": [np.eye(2).tolist(), np.eye(2).tolist()]})
    assert run(["invert", "--family", fam, "--muX", muX, "--set", B]) == 2
    assert "computation failed" in capsys.readouterr().err


def test_forward_and_roundtrip(capsys, tmp_path):
    fam, _, _ = _geometric_files(tmp_path)
    muZ = _dump(tmp_path / "muz.json", {"dim": 2, "alpha": 1.0, "spectral": [{"dir": [1.0, 0.0], "w": 1.0}]})
    panel = _dump(tmp_path / "panel.json", [{"type": "norm_exceed", "radius": 1.0}, {"type": "half_line_product", "signs": [1, 0], "thresholds": [2.0, 0.0]}])
    out = tmp_path / "mux.json"
    code, rep, _ = _run_json(capsys, ["forward", "--muZ", muZ, "--family", fam, "--out", str(out), "--panel", panel])
    assert code == 0
    assert rep["mu_X"]["spectral"][0]["w"] == pytest.approx(1.5)
    assert json.loads(out.read_text())["spectral"][0]["w"] == pytest.approx(1.5)
    code, rep, _ = _run_json(capsys, ["roundtrip", "--muZ", muZ, "--family", fam, "--panel", panel, "--tol", "1e-10"])
    assert code == 0 and rep["all_pass"] and len(rep["rows"]) == 2


def test_mellin_csv(tmp_path, capsys):
    code, rep, _ = _run_json(capsys, ["mellin", "--weights", "1,0.5,0.5", "--alpha", "1", "--theta-max", "6", "--step", "0.01", "--plot-data", str(tmp_path)])
    assert code == 0
    header, rows = read_csv(tmp_path / "mellin.csv")
    assert header == ["theta", "re", "im", "abs"]
    assert len(rows) == rep["n_points"] == 1201
    assert all(len(r) == 4 for r in rows)
    assert rep["min_abs_value"] < 0.01


def test_counterexample_outputs(tmp_path, capsys):
    samples = tmp_path / "s.csv"
    argv = ["counterexample", "--alpha", "1", "--theta0", "1", "--a", "1", "--r", str(math.exp(math.pi)), "--n", "1000", "--seed", "3", "--out", str(samples), "--plot-data", str(tmp_path)]
    code, rep, _ = _run_json(capsys, argv)
    assert code == 0
    assert rep["oscillation"]["gap"] == pytest.approx(math.sqrt(2), abs=1e-9)
    assert rep["amplitude"] == pytest.approx(1 / math.sqrt(2))
    vals = [float(v) for v in samples.read_text().split()]
    assert len(vals) == 1000 and min(vals) >= 1.0
    header, rows = read_csv(tmp_path / "oscillation.csv")
    assert header == ["lnx", "x^alpha_tail"] and all(len(r) == 2 for r in rows)


def test_counterexample_bad_r(capsys):
    assert run(["counterexample", "--alpha", "1", "--theta0", "1", "--a", "1", "--r", "0.5"]) == 1
    assert "need r >=" in capsys.readouterr().err


def test_simulate_and_csv(tmp_path, capsys):
    cfg = _dump(tmp_path / "cfg.json", {"law_Z": {"type": "pareto", "alpha": 1.0}, "family": {"kind": "scalars", "dim": 1, "entries": [1.0, 0.5]}, "n": 50_000, "seed": 4})
    batch = tmp_path / "b.bin"
    code, rep, _ = _run_json(capsys, ["simulate", "--config", cfg, "--out", str(batch), "--plot-data", str(tmp_path)])
    assert code == 0
    assert 0.8 < rep["hill"]["alpha_hat"] < 1.2
    b = read_batch(batch)
    assert len(b) == 50_000 and b.seed == 4
    header, rows = read_csv(tmp_path / "tail_ratio.csv")
    assert header == ["s", "ratio", "sigma"] and all(len(r) == 3 for r in rows)


def test_verify_system(capsys):
    code, rep, _ = _run_json(capsys, ["verify-system"])
    assert code == 0 and rep["residual"] <= 1e-8 and rep["tv_difference"] > 0.1
    code, rep, _ = _run_json(capsys, ["verify-system", "--perturb", "1.05"])
    assert code == 0 and rep["residual"] > 1e-4


def test_reports_are_byte_identical(tmp_path):
    cfg = _dump(tmp_path / "cfg.json", {"law_Z": {"type": "pareto", "alpha": 1.5, "dim": 2}, "family": {"kind": "diag", "dim": 2, "entries": [[1, 1], [0.5, -0.4]]}, "n": 20_000, "seed": 8})
    r1, r2 = tmp_path / "r1.json", tmp_path / "r2.json"
    assert run(["simulate", "--config", cfg, "--report", str(r1)]) == 0
    assert run(["simulate", "--config", cfg, "--report", str(r2), "--threads", "2"]) == 0
    assert r1.read_bytes() == r2.read_bytes()
    assert (tmp_path / "r1.meta.json").exists()
    rep = json.loads(r1.read_text())
    assert rep["schema_version"] == 1 and "created" not in rep
    c1, c2 = tmp_path / "c1.json", tmp_path / "c2.json"
    for p in (c1, c2):
        assert run(["check", "--weights", "1,0.5,0.5", "--alpha", "1", "--report", str(p)]) == 0
    assert c1.read_bytes() == c2.read_bytes()


def test_reports_have_no_nonfinite_numbers(tmp_path):
    p = tmp_path / "r.json"
    assert run(["check", "--weights", "1,1", "--alpha", "1", "--report", str(p)]) == 0
    text = p.read_text()
    assert "Infinity" not in text and "NaN" not in text
    json.loads(text)


def test_emit_plot_data_constant_width(tmp_path):
    rep = {"tables": {"t": (["a", "b"], [(1.0, 2.0), (3.0, float("inf"))])}}
    (path,) = emit_plot_data(rep, tmp_path)
    header, rows = read_csv(path)
    assert header == ["a", "b"] and all(len(r) == 2 for r in rows)
    with pytest.raises(ValueError):
        emit_plot_data({"tables": {"u": (["a"], [(1.0, 2.0)])}}, tmp_path)
