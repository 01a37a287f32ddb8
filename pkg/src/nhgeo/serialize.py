"""CSV and JSON emission for grids, reports and sweeps.

CSV files carry a mandatory header row, comma separators, LF line endings
and floats at 17 significant digits, so identical runs produce identical
bytes.  JSON reports are schema-versioned and embed the configuration that
produced them.
"""

from __future__ import annotations

import json

import numpy as np

SCHEMA_VERSION = 1


def fmt(x):
    """17-significant-digit decimal form (lossless for doubles)."""
    return f"{float(x):.17g}"


def write_csv(path, header, rows):
    """Write rows of floats with a header; deterministic byte output."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(fmt(x) for x in row) + "\n")


def geometry_csv_header():
    header = ["kx", "ky"]
    for tag in ("qgt_lr", "qgt_rl", "qgt_rr", "qgt_ll"):
        for mu in "xy":
            for nu in "xy":
                header += [f"re_{tag}_{mu}{nu}", f"im_{tag}_{mu}{nu}"]
    for tag in ("anom_r", "anom_l"):
        for mu in "xy":
            header += [f"re_{tag}_{mu}", f"im_{tag}_{mu}"]
    header += ["re_curvature", "im_curvature", "norm_product"]
    return header


def geometry_grid_rows(grid):
    """Row-major (kx, ky) rows with Re/Im of every tensor component."""
    nx, ny = grid.shape
    for i in range(nx):
        for j in range(ny):
            row = [grid.kx[i, j], grid.ky[i, j]]
            for tensor in (grid.qgt_lr, grid.qgt_rl, grid.qgt_rr, grid.qgt_ll):
                for mu in range(2):
                    for nu in range(2):
                        v = tensor[i, j, mu, nu]
                        row += [v.real, v.imag]
            for vec in (grid.anomalous_r, grid.anomalous_l):
                for mu in range(2):
                    v = vec[i, j, mu]
                    row += [v.real, v.imag]
            row += [grid.curvature_lr[i, j].real, grid.curvature_lr[i, j].imag,
                    grid.norm_product[i, j]]
            yield row


def write_geometry_csv(path, grid):
    write_csv(path, geometry_csv_header(), geometry_grid_rows(grid))


def write_bound_csv(path, report):
    """Per-point margin table of one bound report."""
    labels = np.atleast_2d(np.asarray(report.labels, dtype=float))
    if labels.shape[0] != report.lhs.shape[0]:
        labels = labels.T if labels.shape[1] == report.lhs.shape[0] else labels
    ncol = labels.shape[1] if labels.ndim == 2 else 1
    header = [f"label{i}" for i in range(ncol)] + ["lhs", "rhs", "margin"]
    rows = []
    for idx in range(report.lhs.shape[0]):
        lab = labels[idx] if labels.ndim == 2 else [labels[idx]]
        rows.append(list(np.atleast_1d(lab)) + [report.lhs[idx],
                                                report.rhs[idx],
                                                report.margin[idx]])
    write_csv(path, header, rows)


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {k: _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return {"re": obj.real.tolist(), "im": obj.imag.tolist()}
        return obj.tolist()
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def write_report_json(path, payload, config=None):
    """Schema-versioned JSON document with the config echoed back."""
    doc = {"schema_version": SCHEMA_VERSION}
    if config is not None:
        doc["config"] = _to_jsonable(config)
    doc.update(_to_jsonable(payload))
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def bound_report_summary(report):
    return {
        "name": report.name,
        "passed": report.passed,
        "worst_margin": report.worst_margin,
        "tolerance": report.tolerance,
        "n_points": int(report.lhs.shape[0]),
        "extra": _to_jsonable(report.extra),
    }
