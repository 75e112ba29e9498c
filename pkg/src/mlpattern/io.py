"""Plain CSV/text output. Floats are written with 17 significant digits."""

from __future__ import annotations

import csv
import sys
from pathlib import Path

import numpy as np

from .model import CONFIG_KEYS, ModelParams

FLOAT_FMT = "%.17g"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return FLOAT_FMT % v
    if isinstance(v, (np.integer,)):
        return str(int(v))
    return str(v)


def write_csv(path, header, rows):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def write_matrix(path, header, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.asarray(data), fmt=FLOAT_FMT, delimiter=",", header=",".join(header), comments="")
    return path


def write_meta(outdir, p: ModelParams, L: float, settings: dict, argv=None):
    """meta.txt: a valid config file; run settings follow as comments."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    values = dict(p.as_dict(), L=L)
    lines = [f"{k} = {values[k]!r}" for k in CONFIG_KEYS]
    lines.append("")
    for k, v in settings.items():
        lines.append(f"# {k}: {v}")
    argv = sys.argv if argv is None else argv
    lines.append("# command: " + " ".join(argv))
    (outdir / "meta.txt").write_text("\n".join(lines) + "\n")


def write_summary(outdir, lines):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    (outdir / "summary.txt").write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------


def write_spacetime(outdir, st):
    outdir = Path(outdir)
    header = ["tau"] + [FLOAT_FMT % x for x in st.x]
    for name, arr in (("V", st.V), ("N", st.N)):
        write_matrix(outdir / f"spacetime_{name}.csv", header, np.column_stack([st.t, arr]))


def read_spacetime(path):
    """Load a spacetime CSV; returns (x, t, values)."""
    with open(path) as fh:
        header = fh.readline().strip().split(",")
    if not header or header[0] != "tau":
        raise ValueError(f"{path}: first header cell must be 'tau'")
    x = np.array([float(h) for h in header[1:]])
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    if data.shape[1] != x.size + 1:
        raise ValueError(f"{path}: rows have {data.shape[1] - 1} values, header has {x.size} nodes")
    return x, data[:, 0], data[:, 1:]


def write_scan(outdir, scan):
    outdir = Path(outdir)
    rows = []
    for bp in scan.points:
        lam = bp.equilibrium.eigenvalues
        rows.append((float(bp.param_value), bp.branch_id, bp.equilibrium.state.V, bp.equilibrium.state.N,
                     lam[0].real, lam[0].imag, lam[1].real, lam[1].imag, bp.equilibrium.stability.value))
    write_csv(outdir / "branches.csv",
              ["param", "branch_id", "V", "N", "re_lambda1", "im_lambda1", "re_lambda2", "im_lambda2", "stability"],
              rows)
    write_csv(outdir / "events.csv", ["param", "kind", "evidence"],
              [(float(e.param_value), e.kind, e.evidence) for e in scan.events])
    write_csv(outdir / "cycles.csv", ["param", "period", "v_min", "v_max"],
              [(float(m.param_value), m.period, m.v_min, m.v_max) for m in scan.cycles])


def write_dispersion(path, d):
    write_matrix(
        path,
        ["k", "T", "Delta", "re_lambda_plus", "im_lambda_plus", "re_lambda_minus", "im_lambda_minus"],
        np.column_stack([d.k, d.trace, d.det, d.lam_plus.real, d.lam_plus.imag,
                         d.lam_minus.real, d.lam_minus.imag]),
    )


def write_orbit(outdir, orbit):
    outdir = Path(outdir)
    write_matrix(outdir / "orbit.csv", ["zeta", "V", "W", "N"],
                 np.column_stack([orbit.zeta, orbit.V, orbit.W, orbit.N]))
    (outdir / "speed.txt").write_text(
        f"c = {FLOAT_FMT % orbit.c}\nclosure_distance = {FLOAT_FMT % orbit.closure_distance}\n"
        f"kind = {orbit.kind.value}\n"
    )
    rows = []
    for role, w in (("source", orbit.source), ("target", orbit.target)):
        for lam in w.eigenvalues:
            rows.append((role, w.state[0], w.state[2], lam.real, lam.imag))
    write_csv(outdir / "eigen.csv", ["equilibrium", "V", "N", "re_lambda", "im_lambda"], rows)
