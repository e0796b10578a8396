"""Batch front-end: solve, audit, counterexample table, parameter sweep,
and profile dump, all driven by a JSON run config.

Config layout (all commands)::

    {
      "domain":   { DomainSpec JSON },
      "field":    {"expr": "1 + x*x"} | {"grid_file": "f.csv"},
      "h":        0.0078125,
      "constants": {"gamma_n": 4.0, "r": 1.0, "s": 1.0,
                    "alpha_exp": 0.5, "beta_exp": null, "q_exp": null},
      "preconditioner": "amg",            # optional
      "solution_file": "u.csv",           # optional: audit this field
      "audit": {"superlevel": true, "section4": true,
                "l1": false, "f_stability": false},
      "outputs": {"report": "report.json", "csv": "row.csv",
                  "solution": "u.csv"},
      "sweep": {"h": [...], "gamma_n": [...],
                "domain": [...], "field": [...]},
      "sigma": [0.1, 0.05], "r_exponents": [1.0, 1.5, 2.0]
    }

Exit status: 0 success; 1 failed (non-conditional) verdicts or an
all-failed sweep; 2 malformed config; 3 unwritable output path.
"""

from __future__ import annotations

import itertools
import json
import sys
from concurrent.futures import ThreadPoolExecutor

import click

from .audit import StabilityConstants, audit_instance, audit_solution
from .elliptic import PoissonProblem, SolverError, dirichlet_energy, \
    solve_dirichlet
from .geometry import DomainSpec, rasterize
from .gridio import dump_json, field_from_spec, read_grid_csv, \
    write_csv_rows, write_grid_csv
from .rearrangement import decreasing_rearrangement

CONFIG_ERROR = 2
OUTPUT_ERROR = 3


def _load_config(path, h_override, gamma_n_override):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise click.exceptions.Exit(CONFIG_ERROR) from _echo_err(
            f"cannot read config: {exc}")
    except json.JSONDecodeError as exc:
        raise click.exceptions.Exit(CONFIG_ERROR) from _echo_err(
            f"malformed JSON in {path}: line {exc.lineno} col {exc.colno}: "
            f"{exc.msg}")
    if not isinstance(cfg, dict):
        _echo_err("config root must be a JSON object")
        raise click.exceptions.Exit(CONFIG_ERROR)
    if h_override is not None:
        cfg["h"] = h_override
    if gamma_n_override is not None:
        cfg.setdefault("constants", {})["gamma_n"] = gamma_n_override
    return cfg


def _echo_err(msg):
    click.echo(msg, err=True)
    return None


def _constants(cfg) -> StabilityConstants:
    c = cfg.get("constants", {})
    try:
        sc = StabilityConstants(**c)
        sc.resolved()
        return sc
    except (TypeError, ValueError) as exc:
        _echo_err(f"bad constants: {exc}")
        raise click.exceptions.Exit(CONFIG_ERROR)


def _require(cfg, key):
    if key not in cfg:
        _echo_err(f"config is missing {key!r}")
        raise click.exceptions.Exit(CONFIG_ERROR)
    return cfg[key]


def _domain(cfg) -> DomainSpec:
    try:
        return DomainSpec.from_json(_require(cfg, "domain"))
    except (KeyError, ValueError, TypeError) as exc:
        _echo_err(f"bad domain spec: {exc}")
        raise click.exceptions.Exit(CONFIG_ERROR)


def _h(cfg) -> float:
    h = _require(cfg, "h")
    if not (isinstance(h, (int, float)) and h > 0):
        _echo_err("h must be a positive number")
        raise click.exceptions.Exit(CONFIG_ERROR)
    return float(h)


def _write_text(path, text):
    try:
        with open(path, "w") as fh:
            fh.write(text)
    except OSError as exc:
        _echo_err(f"cannot write {path}: {exc}")
        raise click.exceptions.Exit(OUTPUT_ERROR)


def _out_path(cfg, out_flag, kind, default):
    if out_flag:
        return out_flag
    return cfg.get("outputs", {}).get(kind, default)


def _build_problem(cfg):
    spec = _domain(cfg)
    h = _h(cfg)
    dom = rasterize(spec, h)
    try:
        f = field_from_spec(_require(cfg, "field"), dom)
    except (ValueError, OSError) as exc:
        _echo_err(f"bad field spec: {exc}")
        raise click.exceptions.Exit(CONFIG_ERROR)
    return spec, PoissonProblem(dom, f)


_common = [
    click.option("--config", "config_path", required=True,
                 type=click.Path(), help="run config JSON"),
    click.option("--h", "h_override", type=float, default=None,
                 help="override grid spacing"),
    click.option("--gamma-n", "gamma_n_override", type=float, default=None,
                 help="override the isoperimetric constant"),
    click.option("--out", "out_flag", type=click.Path(), default=None,
                 help="override the primary output path"),
]


def _with_common(fn):
    for opt in reversed(_common):
        fn = opt(fn)
    return fn


@click.group()
def main():
    """Symmetrization-stability toolkit."""


@main.command()
@_with_common
def solve(config_path, h_override, gamma_n_override, out_flag):
    """Solve the Dirichlet problem and write the solution grid."""
    cfg = _load_config(config_path, h_override, gamma_n_override)
    spec, problem = _build_problem(cfg)
    try:
        u = solve_dirichlet(problem,
                            preconditioner=cfg.get("preconditioner"))
    except SolverError as exc:
        _echo_err(f"solver failed: {exc}")
        raise click.exceptions.Exit(1)
    sol_path = _out_path(cfg, out_flag, "solution", "solution.csv")
    try:
        write_grid_csv(u, sol_path)
    except OSError as exc:
        _echo_err(f"cannot write {sol_path}: {exc}")
        raise click.exceptions.Exit(OUTPUT_ERROR)
    diag = dict(u.solver_diagnostics)
    diag["dirichlet_energy"] = dirichlet_energy(u)
    report_path = cfg.get("outputs", {}).get("report")
    if report_path:
        _write_text(report_path, dump_json({"instance": {
            "domain": spec.to_json(), "h": problem.domain.h},
            "solver": diag}))
    click.echo(f"solved {problem.domain.num_cells} cells in "
               f"{diag['iterations']} iterations "
               f"(residual {diag['relative_residual']:.3e}) -> {sol_path}")


def _run_audit(cfg):
    constants = _constants(cfg)
    opts = cfg.get("audit", {})
    kwargs = dict(do_superlevel=opts.get("superlevel", True),
                  do_section4=opts.get("section4", True),
                  do_l1=opts.get("l1", False),
                  do_f_stability=opts.get("f_stability", False))
    if cfg.get("solution_file"):
        spec, problem = _build_problem(cfg)
        u_file = read_grid_csv(cfg["solution_file"])
        if u_file.values.shape != problem.domain.mask.shape:
            _echo_err("solution grid does not match the domain grid")
            raise click.exceptions.Exit(CONFIG_ERROR)
        from .rearrangement import ScalarField
        u = ScalarField(problem.domain,
                        u_file.values * problem.domain.mask)
        return audit_solution(problem, u, constants,
                              instance={"domain": spec.to_json(),
                                        "h": problem.domain.h,
                                        "gamma_n": constants.gamma_n,
                                        "solution_file": cfg["solution_file"]},
                              **kwargs)
    spec = _domain(cfg)
    h = _h(cfg)
    dom = rasterize(spec, h)
    f = field_from_spec(_require(cfg, "field"), dom)
    problem = PoissonProblem(dom, f)
    u = solve_dirichlet(problem, preconditioner=cfg.get("preconditioner"))
    return audit_solution(problem, u, constants,
                          instance={"domain": spec.to_json(), "h": h,
                                    "gamma_n": constants.gamma_n},
                          **kwargs)


@main.command()
@_with_common
def audit(config_path, h_override, gamma_n_override, out_flag):
    """Run the full stability audit and write the deficit report."""
    cfg = _load_config(config_path, h_override, gamma_n_override)
    try:
        report = _run_audit(cfg)
    except (ValueError, OSError) as exc:
        _echo_err(f"audit setup failed: {exc}")
        raise click.exceptions.Exit(CONFIG_ERROR)
    except SolverError as exc:
        _echo_err(f"solver failed: {exc}")
        raise click.exceptions.Exit(1)
    report_path = _out_path(cfg, out_flag, "report", "report.json")
    _write_text(report_path, dump_json(report.to_json_dict()))
    csv_path = cfg.get("outputs", {}).get("csv")
    if csv_path:
        row = report.csv_row()
        try:
            write_csv_rows(csv_path, list(row.keys()), [row])
        except OSError as exc:
            _echo_err(f"cannot write {csv_path}: {exc}")
            raise click.exceptions.Exit(OUTPUT_ERROR)
    failed = report.failed()
    for v in report.verdicts:
        flag = "PASS" if v.passed else "FAIL"
        cond = " (conditional)" if v.conditional else ""
        click.echo(f"{flag} {v.name}{cond}: lhs={v.lhs:.6g} rhs={v.rhs:.6g} "
                   f"tol={v.tol:.3g}")
    if failed:
        click.echo(f"{len(failed)} non-conditional verdict(s) failed: "
                   + ", ".join(v.name for v in failed), err=True)
        raise click.exceptions.Exit(1)
    click.echo(f"all non-conditional verdicts pass -> {report_path}")


@main.command()
@_with_common
def counterexample(config_path, h_override, gamma_n_override, out_flag):
    """Concentrating-source family table on the unit disk."""
    from .audit import counterexample_family

    cfg = _load_config(config_path, h_override, gamma_n_override)
    sigma = _require(cfg, "sigma")
    if not (isinstance(sigma, list) and sigma):
        _echo_err("sigma must be a nonempty list")
        raise click.exceptions.Exit(CONFIG_ERROR)
    r_list = cfg.get("r_exponents", [1.0, 1.5, 2.0])
    try:
        result = counterexample_family(sigma, _h(cfg), r_list=r_list,
                                       preconditioner=cfg.get(
                                           "preconditioner", "amg"))
    except ValueError as exc:
        _echo_err(f"invalid family parameters: {exc}")
        raise click.exceptions.Exit(CONFIG_ERROR)
    rows = result["rows"]
    fields = list(rows[0].keys())
    csv_path = _out_path(cfg, out_flag, "csv", "counterexample.csv")
    try:
        write_csv_rows(csv_path, fields, rows)
    except OSError as exc:
        _echo_err(f"cannot write {csv_path}: {exc}")
        raise click.exceptions.Exit(OUTPUT_ERROR)
    if "slopes" in result:
        for name, slope in result["slopes"].items():
            click.echo(f"log-log slope {name}: {slope:.4f}")
    else:
        click.echo("single sigma: no slope fit")
    click.echo(f"{len(rows)} rows -> {csv_path}")


@main.command()
@_with_common
@click.option("--workers", type=int, default=1,
              help="worker threads for sweep rows")
def sweep(config_path, h_override, gamma_n_override, out_flag, workers):
    """Audit every point of the configured parameter grid."""
    cfg = _load_config(config_path, h_override, gamma_n_override)
    grid = cfg.get("sweep")
    if not isinstance(grid, dict) or not grid:
        _echo_err("sweep grid missing or empty")
        raise click.exceptions.Exit(CONFIG_ERROR)
    for key, vals in grid.items():
        if key not in ("h", "gamma_n", "domain", "field"):
            _echo_err(f"unsupported sweep parameter {key!r}")
            raise click.exceptions.Exit(CONFIG_ERROR)
        if not (isinstance(vals, list) and vals):
            _echo_err(f"sweep values for {key!r} must be a nonempty list")
            raise click.exceptions.Exit(CONFIG_ERROR)
    keys = sorted(grid)
    points = list(itertools.product(*(list(enumerate(grid[k]))
                                      for k in keys)))

    def one(point):
        sub = {k: v for k, v in cfg.items() if k not in ("sweep", "outputs")}
        label = {}
        for key, (idx, val) in zip(keys, point):
            if key == "gamma_n":
                sub.setdefault("constants", {})
                sub["constants"] = dict(sub["constants"], gamma_n=val)
                label["gamma_n"] = val
            elif key in ("domain", "field"):
                sub[key] = val
                label[f"{key}_index"] = idx
            else:
                sub[key] = val
                label[key] = val
        try:
            report = _run_audit(sub)
            row = dict(label)
            row["status"] = "ok"
            row.update(report.csv_row())
            nfail = len(report.failed())
            if nfail:
                row["status"] = f"verdicts_failed:{nfail}"
            return row
        except (ValueError, OSError, SolverError) as exc:
            row = dict(label)
            row["status"] = f"error: {exc}"
            return row

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(one, points))
    else:
        rows = [one(p) for p in points]

    fieldnames: list[str] = []
    for row in rows:
        for k in row:
            if k not in fieldnames:
                fieldnames.append(k)
    csv_path = _out_path(cfg, out_flag, "csv", "sweep.csv")
    try:
        write_csv_rows(csv_path, fieldnames, rows)
    except OSError as exc:
        _echo_err(f"cannot write {csv_path}: {exc}")
        raise click.exceptions.Exit(OUTPUT_ERROR)
    n_ok = sum(1 for r in rows if r["status"] == "ok")
    click.echo(f"{n_ok}/{len(rows)} rows ok -> {csv_path}")
    if n_ok == 0:
        raise click.exceptions.Exit(1)


@main.command()
@_with_common
def rearrange(config_path, h_override, gamma_n_override, out_flag):
    """Dump the decreasing rearrangement profile of the source field."""
    cfg = _load_config(config_path, h_override, gamma_n_override)
    spec = _domain(cfg)
    dom = rasterize(spec, _h(cfg))
    try:
        f = field_from_spec(_require(cfg, "field"), dom)
    except (ValueError, OSError) as exc:
        _echo_err(f"bad field spec: {exc}")
        raise click.exceptions.Exit(CONFIG_ERROR)
    prof = decreasing_rearrangement(f)
    rows = [{"s": float(s), "value": float(v)}
            for s, v in zip(prof.edges[:-1], prof.values)]
    rows.append({"s": float(prof.edges[-1]), "value": 0.0})
    csv_path = _out_path(cfg, out_flag, "csv", "profile.csv")
    try:
        write_csv_rows(csv_path, ["s", "value"], rows)
    except OSError as exc:
        _echo_err(f"cannot write {csv_path}: {exc}")
        raise click.exceptions.Exit(OUTPUT_ERROR)
    click.echo(f"{len(rows)} profile rows -> {csv_path}")


if __name__ == "__main__":
    main()
