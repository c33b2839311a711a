"""Result export: per-point field CSV, legacy VTK point clouds, snapshots and curves.

Field values are written with 9 significant digits. Snapshots are ``.npz``
archives holding everything needed to re-export a committed state without
rebuilding the model.
"""

import csv
from pathlib import Path

import numpy as np

from .errors import MissingFileError, OutputError

FIELD_COLUMNS = ("x", "y", "ux", "uy", "d", "beta", "H")
CURVE_COLUMNS = ("step", "u_bar", "reaction", "max_d", "dissipated", "iterations")
FMT = "%.9g"


def _g(v):
    return FMT % v


def _open_for_write(path):
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        return open(path, "w", newline="")
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def field_arrays(model, state):
    """Per-quadrature-point fields of a committed state, keyed by column name."""
    from .solver import interpolate

    uh = interpolate(model.shapes, state.u)
    pts = model.quad.points
    return {
        "x": pts[:, 0], "y": pts[:, 1], "ux": uh[:, 0], "uy": uh[:, 1],
        "d": state.d, "beta": model.beta, "H": state.H,
    }


def write_fields_csv(path, fields):
    """CSV ``x,y,ux,uy,d,beta,H``, one row per quadrature point."""
    cols = [np.asarray(fields[k], dtype=float) for k in FIELD_COLUMNS]
    with _open_for_write(path) as fh:
        fh.write(",".join(FIELD_COLUMNS) + "\n")
        for row in zip(*cols):
            fh.write(",".join(_g(v) for v in row) + "\n")


def read_fields_csv(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"field file not found: {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {k: data[:, i] for i, k in enumerate(FIELD_COLUMNS)}


def write_vtk(path, fields, title="imrkpm fields"):
    """Legacy ASCII VTK POLYDATA: one vertex per point, every other column as a scalar."""
    x = np.asarray(fields["x"], dtype=float)
    y = np.asarray(fields["y"], dtype=float)
    n = x.size
    with _open_for_write(path) as fh:
        fh.write("# vtk DataFile Version 3.0\n")
        fh.write(title.replace("\n", " ")[:255] + "\n")
        fh.write("ASCII\nDATASET POLYDATA\n")
        fh.write(f"POINTS {n} double\n")
        for a, b in zip(x, y):
            fh.write(f"{_g(a)} {_g(b)} 0\n")
        fh.write(f"VERTICES {n} {2 * n}\n")
        for i in range(n):
            fh.write(f"1 {i}\n")
        fh.write(f"POINT_DATA {n}\n")
        ux = np.asarray(fields["ux"], dtype=float)
        uy = np.asarray(fields["uy"], dtype=float)
        fh.write("VECTORS displacement double\n")
        for a, b in zip(ux, uy):
            fh.write(f"{_g(a)} {_g(b)} 0\n")
        for key in ("d", "beta", "H"):
            fh.write(f"SCALARS {key} double 1\nLOOKUP_TABLE default\n")
            for v in np.asarray(fields[key], dtype=float):
                fh.write(_g(v) + "\n")


def save_snapshot(path, model, state):
    fields = field_arrays(model, state)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as fh:
            np.savez(fh, u=state.u, H=state.H, d=state.d, step=state.step, u_bar=state.u_bar,
                     work=state.work, reaction=state.reaction, points=model.quad.points,
                     beta=model.beta, ux=fields["ux"], uy=fields["uy"])
    except OSError as exc:
        raise OutputError(f"cannot write {path}: {exc.strerror or exc}") from exc


def load_snapshot(path):
    """Snapshot archive -> dict of arrays (scalars come back as 0-d arrays)."""
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"snapshot not found: {path}")
    with np.load(path) as z:
        return {k: z[k] for k in z.files}


def snapshot_fields(snap):
    pts = snap["points"]
    return {"x": pts[:, 0], "y": pts[:, 1], "ux": snap["ux"], "uy": snap["uy"],
            "d": snap["d"], "beta": snap["beta"], "H": snap["H"]}


def write_curve_csv(path, results):
    """Load-displacement record of the committed steps."""
    with _open_for_write(path) as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for r in results:
            if not r.converged:
                continue
            w.writerow([r.step, _g(r.u_bar), _g(r.reaction), _g(r.max_d), _g(r.dissipated), r.iterations])


def read_curve_csv(path):
    path = Path(path)
    if not path.is_file():
        raise MissingFileError(f"curve file not found: {path}")
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return {k: data[:, i] for i, k in enumerate(CURVE_COLUMNS)}
