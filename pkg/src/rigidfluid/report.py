"""Run report serialization: report.json, CSV tables and field grids.

CSV columns
-----------
energy.csv
    ``t, Lambda, E_fluid, E_rigid, E_total, slack_min``
lambda.csv
    ``t, Lambda_selected, Lambda, attained_max, eps, slack_min``
residuals.csv
    ``t, body, force_residual, torque_residual, compatibility_residual,
    neumann_residual, neumann_deficit``
grids/<field>_<k>.bin
    binary grids of ``p``, ``rho``, ``phi`` and ``E`` at every
    ``output.grid_every``-th slice (and the last one); the slice-0 grids are
    also written as ``grids/<field>_000.csv`` with columns ``x, y, value``.
"""

import csv
import datetime as _dt
import json
import os

import numpy as np

from . import __version__, kernels
from .fields import sample_on_grid, write_grid_binary, write_grid_csv

SCHEMA = 1
GRID_FIELDS = ("p", "rho", "phi", "E")


def effective_tolerances(report):
    """Relative tolerances from the scenario plus the absolute values they imply."""
    tol = dict(report.scenario.tolerances)
    derived = {}
    for st in report.stages:
        d = st.data
        if st.name == "compatibility":
            derived["compatibility_abs"] = d.get("tolerance")
        elif st.name == "newton":
            derived["newton_force_abs"] = [b["force_tolerance"] for b in d.get("bodies", [])]
            derived["newton_torque_abs"] = [b["torque_tolerance"] for b in d.get("bodies", [])]
        elif st.name == "lambda":
            derived["eps"] = d.get("eps")
            derived["required_slack"] = d.get("required_slack")
        elif st.name == "energy":
            derived["delta_E"] = d.get("delta_E")
    tol["derived"] = derived
    return tol


def report_dict(report, timestamp=None, extra=None):
    sc = report.scenario
    out = {
        "schema": SCHEMA,
        "tool": "rigidfluid",
        "version": __version__,
        "timestamp": timestamp or _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        "kernel_backend": kernels.BACKEND,
        "scenario": {"echo": sc.to_dict(), "sha256": sc.content_hash()},
        "seed": sc.seed,
        "tolerances": effective_tolerances(report),
    }
    out.update(report.to_dict())
    if extra:
        out.update(extra)
    return out


def write_json(path, obj):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if v is None else (repr(float(v)) if isinstance(v, (float, np.floating)) else v)
                        for v in r])


def energy_rows(report):
    a = report.artifacts
    if "energy" not in a:
        return []
    sch = a["final_schedule"]
    e = a["energy"]
    return [
        (float(t), sch.values[k], e["fluid"][k], e["rigid"][k], e["total"][k], sch.slack[k])
        for k, t in enumerate(sch.times)
    ]


def lambda_rows(report):
    a = report.artifacts
    if "schedule" not in a:
        return []
    sel = a["schedule"]
    fin = a.get("final_schedule", sel)
    slack = fin.slack if fin.slack is not None else sel.slack
    return [
        (float(t), sel.values[k], fin.values[k], sel.attained[k], sel.eps,
         None if slack is None else slack[k])
        for k, t in enumerate(sel.times)
    ]


def residual_rows(report):
    a = report.artifacts
    rows = a.get("newton_rows", [])
    comp = report.stage("compatibility")
    comp = comp.data.get("residuals") if comp is not None else None
    state = a.get("state")
    times = list(report.scenario.times)
    out = []
    for t, i, f, tq in rows:
        k = times.index(t) if t in times else int(np.argmin(np.abs(np.asarray(times) - t)))
        c = comp[k] if comp else None
        nr = nd = None
        if state is not None:
            nr = state.slices[k].neumann.residual
            nd = state.slices[k].neumann.deficit
        out.append((t, i, f, tq, c, nr, nd))
    return out


def grid_fields(slice_, Lam, dim=2):
    """Nodal fields written to the grid files (``E`` is the prescribed kinetic energy)."""
    E = Lam - 0.5 * dim * (slice_.phi_t + slice_.p)
    return {"p": slice_.p, "rho": slice_.rho, "phi": slice_.phi, "E": E}


def write_grids(report, out_dir):
    a = report.artifacts
    state = a.get("state")
    if state is None:
        return []
    sc = report.scenario
    every = max(1, int(sc.data["output"].get("grid_every", 8)))
    nx = int(sc.data["output"]["grid_nx"])
    ny = int(sc.data["output"]["grid_ny"])
    sched = a.get("final_schedule")
    gdir = os.path.join(out_dir, "grids")
    os.makedirs(gdir, exist_ok=True)
    n = len(state.slices)
    ks = sorted(set(range(0, n, every)) | {n - 1})
    written = []
    for k in ks:
        s = state.slices[k]
        Lam = sched.values[k] if sched is not None else 0.0
        fields = grid_fields(s, Lam)
        for name in GRID_FIELDS:
            if name == "E" and sched is None:
                continue
            nodal = fields[name]
            vals, bbox = sample_on_grid(s.mesh, nodal, nx, ny)
            path = os.path.join(gdir, f"{name}_{k:03d}.bin")
            write_grid_binary(path, vals, bbox, s.t)
            written.append(path)
            if k == 0:
                cpath = os.path.join(gdir, f"{name}_000.csv")
                write_grid_csv(cpath, vals, bbox)
                written.append(cpath)
    return written


def emit_outputs(report, out_dir, extra=None, timestamp=None):
    """Write report.json, the CSV tables and grids; return the report dict."""
    os.makedirs(out_dir, exist_ok=True)
    d = report_dict(report, timestamp, extra)
    write_json(os.path.join(out_dir, "report.json"), d)
    _write_csv(os.path.join(out_dir, "energy.csv"),
               ["t", "Lambda", "E_fluid", "E_rigid", "E_total", "slack_min"], energy_rows(report))
    _write_csv(os.path.join(out_dir, "lambda.csv"),
               ["t", "Lambda_selected", "Lambda", "attained_max", "eps", "slack_min"],
               lambda_rows(report))
    _write_csv(os.path.join(out_dir, "residuals.csv"),
               ["t", "body", "force_residual", "torque_residual", "compatibility_residual",
                "neumann_residual", "neumann_deficit"], residual_rows(report))
    write_grids(report, out_dir)
    return d


def write_table(path, header, rows):
    _write_csv(path, header, rows)


__all__ = ["SCHEMA", "emit_outputs", "report_dict", "effective_tolerances", "write_json",
           "write_table", "energy_rows", "lambda_rows", "residual_rows"]
