"""File formats: grid CSV fields, deterministic JSON/CSV report emission,
and source-field construction from config specs.

Grid CSV convention: first line is the literal header ``nx,ny,h,ox,oy``,
second line holds those five values, then nx rows of ny comma-separated
cell values in row-major order (row i sweeps the x index); cells outside
the mask are NaN.  Floats are always written with 17 significant digits
so outputs round-trip and are byte-identical across runs.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np

from .geometry import GridDomain
from .rearrangement import ScalarField

__all__ = ["write_grid_csv", "read_grid_csv", "field_from_spec",
           "dump_json", "write_csv_rows", "fmt_float"]

_FLOAT_FMT = ".17g"


def fmt_float(x: float) -> str:
    return format(float(x), _FLOAT_FMT)


def write_grid_csv(field: ScalarField, path) -> None:
    dom = field.domain
    nx, ny = dom.mask.shape
    vals = np.where(dom.mask, field.values, np.nan)
    with open(path, "w", newline="") as fh:
        fh.write("nx,ny,h,ox,oy\n")
        fh.write(",".join([str(nx), str(ny), fmt_float(dom.h),
                           fmt_float(dom.origin[0]),
                           fmt_float(dom.origin[1])]) + "\n")
        for i in range(nx):
            fh.write(",".join(fmt_float(v) if math.isfinite(v) else "nan"
                              for v in vals[i]) + "\n")


def read_grid_csv(path) -> ScalarField:
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "nx,ny,h,ox,oy":
            raise ValueError(f"bad grid header {header!r}")
        nx, ny, h, ox, oy = fh.readline().strip().split(",")
        nx, ny = int(nx), int(ny)
        vals = np.loadtxt(fh, delimiter=",", ndmin=2)
    if vals.shape != (nx, ny):
        raise ValueError(f"grid body {vals.shape} does not match "
                         f"header ({nx}, {ny})")
    mask = np.isfinite(vals)
    h, ox, oy = float(h), float(ox), float(oy)
    if mask[0].any() or mask[-1].any() or mask[:, 0].any() or mask[:, -1].any():
        # grow a NaN ring so the mask satisfies the boundary convention
        vals = np.pad(vals, 1, constant_values=np.nan)
        mask = np.isfinite(vals)
        ox, oy = ox - h, oy - h
    dom = GridDomain(mask, h, (ox, oy))
    return ScalarField(dom, np.where(mask, vals, 0.0))


_EXPR_NAMES = {
    "pi": math.pi, "e": math.e,
    "sin": np.sin, "cos": np.cos, "tan": np.tan, "exp": np.exp,
    "log": np.log, "sqrt": np.sqrt, "abs": np.abs, "hypot": np.hypot,
    "where": np.where, "minimum": np.minimum, "maximum": np.maximum,
}


def field_from_spec(spec: dict, domain: GridDomain,
                    nonnegative: bool = True) -> ScalarField:
    """Build a source field from ``{"expr": ...}`` or ``{"grid_file": ...}``.

    Expressions are evaluated at cell centers with x, y arrays and a
    whitelist of math names.  Grid files must match the target lattice;
    values are transferred cell-by-cell through coordinates.
    """
    if "expr" in spec:
        expr = spec["expr"]
        if "__" in expr:
            raise ValueError("disallowed token in expression")
        X, Y = domain.cell_centers()
        ns = dict(_EXPR_NAMES, x=X, y=Y)
        try:
            vals = eval(expr, {"__builtins__": {}}, ns)  # noqa: S307 whitelist
        except (SyntaxError, NameError, TypeError) as exc:
            raise ValueError(f"bad expression {expr!r}: {exc}") from exc
        vals = np.broadcast_to(np.asarray(vals, dtype=float), X.shape).copy()
        vals[~domain.mask] = 0.0
        return ScalarField(domain, vals, nonnegative=nonnegative)
    if "grid_file" in spec:
        src = read_grid_csv(spec["grid_file"])
        sd = src.domain
        if abs(sd.h - domain.h) > 1e-12 * domain.h:
            raise ValueError("grid file spacing does not match the target h")
        X, Y = domain.cell_centers()
        ii = np.rint((X - sd.origin[0]) / sd.h - 0.5).astype(int)
        jj = np.rint((Y - sd.origin[1]) / sd.h - 0.5).astype(int)
        inside = ((ii >= 0) & (ii < sd.mask.shape[0])
                  & (jj >= 0) & (jj < sd.mask.shape[1]))
        vals = np.zeros(X.shape)
        vals[inside] = src.values[ii[inside], jj[inside]]
        vals[~domain.mask] = 0.0
        return ScalarField(domain, vals, nonnegative=nonnegative)
    raise ValueError('field spec needs "expr" or "grid_file"')


def dump_json(obj, indent: int = 2) -> str:
    """Deterministic JSON with fixed float formatting.

    NaN/inf become null (JSON has no literal for them); dict key order is
    insertion order, which our report builders keep fixed.
    """
    out: list[str] = []
    _ser(obj, out, indent, 0)
    return "".join(out) + "\n"


def _ser(obj, out, indent, level):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif isinstance(obj, (bool, np.bool_)):
        out.append("true" if obj else "false")
    elif isinstance(obj, (int, np.integer)):
        out.append(str(int(obj)))
    elif isinstance(obj, (float, np.floating)):
        out.append(fmt_float(obj) if math.isfinite(obj) else "null")
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        for i, (k, v) in enumerate(obj.items()):
            out.append(pad + json.dumps(str(k)) + ": ")
            _ser(v, out, indent, level + 1)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "}")
    elif isinstance(obj, (list, tuple, np.ndarray)):
        seq = list(obj)
        if not seq:
            out.append("[]")
            return
        out.append("[\n")
        for i, v in enumerate(seq):
            out.append(pad)
            _ser(v, out, indent, level + 1)
            out.append(",\n" if i < len(seq) - 1 else "\n")
        out.append(end + "]")
    else:
        raise TypeError(f"cannot serialize {type(obj)!r}")


def write_csv_rows(path, fieldnames, rows) -> None:
    """CSV with fixed float formatting and input row order."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fieldnames)
        for row in rows:
            writer.writerow([_csv_cell(row.get(k, "")) for k in fieldnames])


def _csv_cell(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return fmt_float(v) if math.isfinite(v) else "nan"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return v
