import json
import math

import numpy as np
import pytest
from click.testing import CliRunner

from symstab.cli import main
from symstab.gridio import read_grid_csv, write_grid_csv
from symstab.rearrangement import ScalarField

DISK = {"shape": "disk", "center": [0.0, 0.0], "radius": 1.0}
SQUARE = {"shape": "polygon",
          "vertices": [[0, 0], [1, 0], [1, 1], [0, 1]]}


@pytest.fixture
def runner():
    return CliRunner()


def _write_cfg(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def test_solve_disk_torsion(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "1"}, "h": 1.0 / 32.0,
           "outputs": {"solution": str(tmp_path / "u.csv"),
                       "report": str(tmp_path / "solve.json")}}
    res = runner.invoke(main, ["solve", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    u = read_grid_csv(str(tmp_path / "u.csv"))
    assert float(u.masked().max()) == pytest.approx(0.25, abs=2e-3)
    rep = json.loads((tmp_path / "solve.json").read_text())
    assert rep["solver"]["dirichlet_energy"] > 0.0
    assert rep["instance"]["h"] == pytest.approx(1.0 / 32.0)


def test_malformed_json_exits_2(runner, tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"domain": [,}')
    res = runner.invoke(main, ["solve", "--config", str(path)])
    assert res.exit_code == 2
    assert "malformed JSON" in res.output


def test_missing_key_exits_2(runner, tmp_path):
    cfg = {"field": {"expr": "1"}, "h": 0.1}
    res = runner.invoke(main, ["solve", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 2


def test_unwritable_output_exits_3(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "1"}, "h": 1.0 / 16.0,
           "outputs": {"solution": "/no_such_dir_zz/u.csv"}}
    res = runner.invoke(main, ["solve", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 3


def test_rejects_unsafe_expression(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "__import__('os')"},
           "h": 1.0 / 16.0}
    res = runner.invoke(main, ["solve", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 2


def test_audit_passes_and_reports(runner, tmp_path):
    cfg = {"domain": SQUARE, "field": {"expr": "1"}, "h": 1.0 / 32.0,
           "audit": {"superlevel": True, "section4": False},
           "outputs": {"report": str(tmp_path / "report.json"),
                       "csv": str(tmp_path / "row.csv")}}
    res = runner.invoke(main, ["audit", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    assert "PASS talenti_comparison" in res.output
    rep = json.loads((tmp_path / "report.json").read_text())
    assert set(rep) == {"instance", "quantities", "verdicts", "solver"}
    for v in rep["verdicts"]:
        assert {"name", "lhs", "rhs", "tol", "pass",
                "conditional", "note"} <= set(v)
    noncond = [v for v in rep["verdicts"]
               if not v["conditional"] and v["pass"] is not None]
    assert all(v["pass"] for v in noncond)
    header = (tmp_path / "row.csv").read_text().splitlines()[0]
    assert "talenti_comparison_pass" in header


def test_audit_corrupted_solution_exits_1(runner, tmp_path):
    cfg = {"domain": SQUARE, "field": {"expr": "1"}, "h": 1.0 / 32.0,
           "outputs": {"solution": str(tmp_path / "u.csv")}}
    path = _write_cfg(tmp_path, cfg)
    assert runner.invoke(main, ["solve", "--config", path]).exit_code == 0
    u = read_grid_csv(str(tmp_path / "u.csv"))
    write_grid_csv(ScalarField(u.domain, 5.0 * u.values),
                   str(tmp_path / "bad.csv"))
    cfg["solution_file"] = str(tmp_path / "bad.csv")
    cfg["audit"] = {"superlevel": False, "section4": False}
    cfg["outputs"] = {"report": str(tmp_path / "report.json")}
    res = runner.invoke(main, ["audit", "--config",
                               _write_cfg(tmp_path, cfg, "cfg2.json")])
    assert res.exit_code == 1
    assert "FAIL talenti_comparison" in res.output


def test_counterexample_single_sigma(runner, tmp_path):
    cfg = {"sigma": [0.25], "h": 1.0 / 32.0, "r_exponents": [2.0],
           "outputs": {"csv": str(tmp_path / "ce.csv")}}
    res = runner.invoke(main, ["counterexample", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    assert "single sigma: no slope fit" in res.output
    lines = (tmp_path / "ce.csv").read_text().splitlines()
    assert lines[0] == "sigma,l2_diff,sup_gap,eps_inf"
    vals = dict(zip(lines[0].split(","), lines[1].split(",")))
    assert float(vals["l2_diff"]) == pytest.approx(
        math.sqrt(2.0 * math.pi), rel=0.05)


def test_counterexample_bad_sigma_exits_2(runner, tmp_path):
    cfg = {"sigma": [0.5], "h": 1.0 / 32.0}
    res = runner.invoke(main, ["counterexample", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 2


def test_sweep_deterministic_csv(runner, tmp_path):
    cfg = {"domain": SQUARE, "field": {"expr": "1"},
           "audit": {"superlevel": False, "section4": False},
           "sweep": {"h": [1.0 / 16.0, 1.0 / 32.0]}}
    path = _write_cfg(tmp_path, cfg)
    out1, out2 = str(tmp_path / "s1.csv"), str(tmp_path / "s2.csv")
    r1 = runner.invoke(main, ["sweep", "--config", path, "--out", out1])
    assert r1.exit_code == 0, r1.output
    r2 = runner.invoke(main, ["sweep", "--config", path, "--out", out2,
                              "--workers", "2"])
    assert r2.exit_code == 0, r2.output
    b1 = open(out1, "rb").read()
    assert b1 == open(out2, "rb").read()
    lines = b1.decode().splitlines()
    assert len(lines) == 3
    cols = lines[0].split(",")
    hcol = cols.index("h")
    hs = [float(line.split(",")[hcol]) for line in lines[1:]]
    assert hs == [1.0 / 16.0, 1.0 / 32.0]   # rows follow input order


def test_sweep_gamma_n_axis(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "1"}, "h": 1.0 / 16.0,
           "audit": {"superlevel": False, "section4": False},
           "sweep": {"gamma_n": [4.0, 100.0]},
           "outputs": {"csv": str(tmp_path / "g.csv")}}
    res = runner.invoke(main, ["sweep", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "g.csv").read_text().splitlines()
    assert len(lines) == 3
    assert lines[0].split(",")[0] == "gamma_n"


def test_sweep_missing_or_bad_grid_exits_2(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "1"}, "h": 0.1}
    res = runner.invoke(main, ["sweep", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 2
    cfg["sweep"] = {"tolerance": [1e-8]}
    res = runner.invoke(main, ["sweep", "--config",
                               _write_cfg(tmp_path, cfg, "c2.json")])
    assert res.exit_code == 2


def test_sweep_all_failed_exits_1(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "x /"},   # invalid expression
           "audit": {"superlevel": False, "section4": False},
           "sweep": {"h": [1.0 / 16.0]},
           "outputs": {"csv": str(tmp_path / "f.csv")}}
    res = runner.invoke(main, ["sweep", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 1
    assert "0/1 rows ok" in res.output


def test_rearrange_profile_csv(runner, tmp_path):
    cfg = {"domain": SQUARE, "field": {"expr": "1 + x*x"}, "h": 1.0 / 16.0,
           "outputs": {"csv": str(tmp_path / "p.csv")}}
    res = runner.invoke(main, ["rearrange", "--config",
                               _write_cfg(tmp_path, cfg)])
    assert res.exit_code == 0, res.output
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "s,value"
    rows = [tuple(map(float, line.split(","))) for line in lines[1:]]
    s, v = zip(*rows)
    assert list(s) == sorted(s)
    assert list(v[:-1]) == sorted(v[:-1], reverse=True)
    assert v[-1] == 0.0
    assert s[-1] == pytest.approx(1.0, abs=1e-12)   # |square| = 1


def test_h_and_gamma_overrides(runner, tmp_path):
    cfg = {"domain": DISK, "field": {"expr": "1"}, "h": 1.0 / 64.0,
           "audit": {"superlevel": False, "section4": False},
           "outputs": {"report": str(tmp_path / "r.json")}}
    res = runner.invoke(main, ["audit", "--config",
                               _write_cfg(tmp_path, cfg),
                               "--h", str(1.0 / 16.0),
                               "--gamma-n", "9.0"])
    assert res.exit_code == 0, res.output
    rep = json.loads((tmp_path / "r.json").read_text())
    assert rep["instance"]["h"] == pytest.approx(1.0 / 16.0)
    assert rep["instance"]["gamma_n"] == 9.0
