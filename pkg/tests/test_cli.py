import csv
import json
import math

import numpy as np
import pytest

from coulombgas import cli
from coulombgas import model as mdl
from coulombgas.errors import SimulationBlowup


def read_rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def run(*argv):
    return cli.main([str(a) for a in argv])


def test_simulate_outputs(tmp_path):
    out = tmp_path / "a"
    code = run("simulate", "--n", 5, "--regime", "ginibre", "--t-end", 0.05, "--dt", 1e-3,
               "--paths", 3, "--seed", 7, "--record-every", 10, "--out", out)
    assert code == 0
    rows = read_rows(out / "path_00001.csv")
    assert rows[0] == ["t", "h_v", "h_w", "min_gap"] and len(rows) == 7
    assert (out / "path_00001.csv").read_bytes().count(b"\r") == 0
    # shortest round-trip formatting
    assert all(repr(float(v)) == v for row in rows[1:] for v in row)
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary["guard_events"]) == {"gap-floor", "radius-cap", "halving-exhausted"}
    assert summary["params"] == {"n": 5, "alpha": 5.0, "beta": 25.0}
    assert len(summary["h_v"]["mean"]) == 6
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate" and manifest["seed"] == 7
    assert str(out / "summary.json") in manifest["outputs"]
    assert manifest["started"] <= manifest["finished"]


def test_crossover_regime_and_t_end_zero(tmp_path):
    out = tmp_path / "z"
    assert run("simulate", "--n", 4, "--regime", "crossover", "--t-end", 0, "--paths", 2,
               "--out", out) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["params"] == {"n": 4, "alpha": 4.0, "beta": 4.0}
    rows = read_rows(out / "path_00000.csv")
    assert len(rows) == 2
    x0 = np.array([[float(v) for v in r] for r in read_rows(out / "initial.csv")[1:]])
    assert float(rows[1][1]) == mdl.energy_v(x0) and float(rows[1][2]) == mdl.energy_w(x0)


def test_config_precedence_and_replay(tmp_path):
    cfg = tmp_path / "run.conf"
    cfg.write_text("# test\nn = 3\nt_end = 0.02\npaths = 5\nseed = 4\n")
    out = tmp_path / "c"
    assert run("simulate", "--config", cfg, "--paths", 2, "--out", out) == 0
    params = json.loads((out / "manifest.json").read_text())["parameters"]
    assert params["n"] == 3 and params["paths"] == 2 and params["t_end"] == 0.02
    assert params["dt"] == cli.DEFAULTS["simulate"]["dt"]
    again = tmp_path / "d"
    assert run("simulate", "--config", out / "manifest.json", "--out", again) == 0
    for name in ("path_00000.csv", "path_00001.csv", "summary.json", "initial.csv"):
        assert (out / name).read_bytes() == (again / name).read_bytes()


def test_init_file_and_json_format(tmp_path):
    init = tmp_path / "init.csv"
    init.write_text("x,y\n1,0\n-1,0\n0,1\n")
    out = tmp_path / "j"
    assert run("simulate", "--n", 3, "--init", init, "--t-end", 0.01, "--paths", 1,
               "--format", "json", "--out", out) == 0
    rows = json.loads((out / "path_00000.json").read_text())
    assert rows[0]["h_v"] == pytest.approx(1.0)
    assert set(rows[0]) == {"t", "h_v", "h_w", "min_gap"}


def test_usage_errors(tmp_path, capsys):
    assert run("simulate", "--bogus") == 2
    assert run("simulate", "--n", 0, "--out", tmp_path / "e") == 2
    assert run("simulate", "--regime", "hot") == 2
    assert run("marginals", "--n-list", "1,2", "--out", tmp_path / "m") == 2
    bad = tmp_path / "bad.conf"
    bad.write_text("nonsense line\n")
    assert run("simulate", "--config", bad) == 2
    assert run() == 2
    assert "usage error" in capsys.readouterr().err


def test_blowup_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*a, **k):
        raise SimulationBlowup("non-finite state on path 0")

    monkeypatch.setattr(cli, "simulate_ensemble", boom)
    assert run("simulate", "--t-end", 0.01, "--paths", 1, "--out", tmp_path / "b") == 3
    assert "blow-up" in capsys.readouterr().err


def test_cir_command(tmp_path):
    out = tmp_path / "cir"
    assert run("cir", "--n", 8, "--alpha", 8, "--beta", 64, "--t-end", 6, "--paths", 2000,
               "--seed", 3, "--out", out) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["all_pass"] and s["feller"] and s["em_vs_exact_time"] == 1.0
    rows = read_rows(out / "comparison.csv")
    assert rows[0] == list(cli.CIR_COLUMNS)
    first = dict(zip(rows[0], rows[1]))
    assert float(first["t"]) == 0 and float(first["em_mean"]) == 1.0


def test_cir_t_zero(tmp_path):
    out = tmp_path / "c0"
    assert run("cir", "--t-end", 0, "--r0", 0.7, "--paths", 10, "--out", out) == 0
    rows = read_rows(out / "comparison.csv")
    assert len(rows) == 2 and float(dict(zip(rows[0], rows[1]))["em_mean"]) == 0.7


def test_marginals_command(tmp_path):
    out = tmp_path / "m"
    assert run("marginals", "--n-list", "8,16,32,64", "--grid", 40, "--out", out) == 0
    for n in (8, 16, 32, 64):
        rows = read_rows(out / f"grid_n{n}.csv")
        assert rows[0] == list(cli.GRID_COLUMNS) and len(rows) == 1 + 41 * 41
        origin = [r for r in rows[1:] if float(r[0]) == 0 and float(r[1]) == 0]
        assert len(origin) == 1 and float(origin[0][2]) == pytest.approx(1 / math.pi, rel=1e-14)
    rep = json.loads((out / "report.json").read_text())
    assert rep["sup_delta_decreasing"]
    assert all(v["lemma_exp_violations"] == 0 for v in rep["per_n"].values())


def test_verify_quick_is_seed_independent(tmp_path, capsys):
    a = run("verify", "--quick", "--seed", 1, "--out", tmp_path / "v1")
    b = run("verify", "--quick", "--seed", 2, "--out", tmp_path / "v2")
    assert a == b == 0
    r1 = json.loads((tmp_path / "v1" / "report.json").read_text())
    r2 = json.loads((tmp_path / "v2" / "report.json").read_text())
    v1 = [(c["number"], [k["passed"] for k in c["checks"]]) for c in r1["criteria"]]
    v2 = [(c["number"], [k["passed"] for k in c["checks"]]) for c in r2["criteria"]]
    assert v1 == v2 and [n for n, _ in v1] == [1]
    assert "[PASS] criterion 1" in capsys.readouterr().out


def test_verify_failure_names_check(monkeypatch, capsys):
    from coulombgas import verify as ver

    def fake(seed, quick, log=None):
        c = ver.Criterion(99, "demo", [ver.Check("always fails", False, 1.0, 0.0)])
        return [c]

    monkeypatch.setattr(cli.ver, "run_suite", fake)
    assert run("verify") == 1
    assert "always fails" in capsys.readouterr().err
