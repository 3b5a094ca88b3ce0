"""File formats: VTK snapshots, trajectory checkpoints, reports.

Snapshots use the legacy ASCII unstructured-grid VTK format with %.17g
number formatting, which round-trips float64 exactly.  Checkpoints are a
small binary container: an 8-byte magic, a JSON header (mesh hash, array
shape, step size) and the raw float64 field records in fixed order, so a
checkpoint can be validated against a mesh before any array is touched.
Study results go to a CSV with a fixed column order and machine-readable
reports to JSON.
"""

import csv
import json
import os
import struct

import numpy as np

from .fem import DualTrajectory, Trajectory

MAGIC_TRAJ = b"VPTRAJ01"
MAGIC_DUAL = b"VPDUAL01"

CSV_COLUMNS = ("h_km", "k_hours", "J", "eta_total", "eta_h", "eta_k",
               "eta_beta", "effectivity")

_G = "%.17g"


# -- VTK ----------------------------------------------------------------------

def write_vtk(path, mesh, fields, title="vpice fields"):
    """Write nodal fields on the leaf mesh as a legacy ASCII VTK file.

    fields maps names to nodal arrays; the pair ('vx', 'vy'), when both are
    present, is additionally emitted as a VECTORS entry named 'velocity'.
    """
    nodes = mesh.nodes
    quads = mesh.elements[:, [0, 1, 3, 2]]       # corner order SW SE NE NW
    n, e = len(nodes), len(quads)
    lines = ["# vtk DataFile Version 3.0", title, "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {n} double"]
    for x, y in nodes:
        lines.append(f"{_G % x} {_G % y} 0")
    lines.append(f"CELLS {e} {5 * e}")
    for q in quads:
        lines.append("4 %d %d %d %d" % tuple(q))
    lines.append(f"CELL_TYPES {e}")
    lines.extend(["9"] * e)                      # VTK_QUAD
    lines.append(f"POINT_DATA {n}")
    for name, u in fields.items():
        lines.append(f"SCALARS {name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(_G % v for v in np.asarray(u, dtype=float))
    if "vx" in fields and "vy" in fields:
        lines.append("VECTORS velocity double")
        for vx, vy in zip(fields["vx"], fields["vy"]):
            lines.append(f"{_G % vx} {_G % vy} 0")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_vtk(path):
    """Read back a file written by write_vtk; returns (points, quads, data)."""
    with open(path) as fh:
        tok = fh.read().split("\n")
    i = tok.index(next(l for l in tok if l.startswith("POINTS")))
    n = int(tok[i].split()[1])
    points = np.array([[float(w) for w in tok[i + 1 + j].split()[:2]]
                       for j in range(n)])
    i = i + 1 + n
    e = int(tok[i].split()[1])
    quads = np.array([[int(w) for w in tok[i + 1 + j].split()[1:]]
                      for j in range(e)], dtype=np.int64)
    i = tok.index(f"POINT_DATA {n}")
    data = {}
    i += 1
    while i < len(tok):
        if tok[i].startswith("SCALARS"):
            name = tok[i].split()[1]
            vals = [float(tok[i + 2 + j]) for j in range(n)]
            data[name] = np.array(vals)
            i += 2 + n
        elif tok[i].startswith("VECTORS"):
            i += 1 + n                           # derived from vx/vy; skip
        else:
            i += 1
    return points, quads, data


# -- checkpoints --------------------------------------------------------------

def _write_container(path, magic, header, arrays):
    blob = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(magic)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def _read_container(path, magic):
    with open(path, "rb") as fh:
        got = fh.read(8)
        if got != magic:
            raise ValueError(f"bad checkpoint magic {got!r} in {path}")
        (hlen,) = struct.unpack("<Q", fh.read(8))
        header = json.loads(fh.read(hlen).decode())
        payload = fh.read()
    return header, payload


def _unpack_rows(payload, rows, cols, count):
    want = rows * cols * count
    data = np.frombuffer(payload, dtype="<f8", count=want)
    if data.size != want:
        raise ValueError("checkpoint payload truncated")
    return data.reshape(count, rows, cols)


def save_trajectory(path, traj):
    header = {"kind": "primal", "mesh_hash": traj.mesh.mesh_hash,
              "rows": len(traj.A), "n_nodes": traj.A.shape[1],
              "k": traj.k}
    _write_container(path, MAGIC_TRAJ, header,
                     [traj.vx, traj.vy, traj.A, traj.H])


def load_trajectory(path, mesh):
    header, payload = _read_container(path, MAGIC_TRAJ)
    if header["mesh_hash"] != mesh.mesh_hash:
        raise ValueError("checkpoint was written on a different mesh")
    arrs = _unpack_rows(payload, header["rows"], header["n_nodes"], 4)
    return Trajectory(mesh, header["k"], *arrs)


def save_dual(path, dual):
    header = {"kind": "dual", "mesh_hash": dual.mesh.mesh_hash,
              "rows": len(dual.qA), "n_nodes": dual.qA.shape[1],
              "k": dual.k}
    _write_container(path, MAGIC_DUAL, header,
                     [dual.zx, dual.zy, dual.qA, dual.qH])


def load_dual(path, mesh):
    header, payload = _read_container(path, MAGIC_DUAL)
    if header["mesh_hash"] != mesh.mesh_hash:
        raise ValueError("checkpoint was written on a different mesh")
    arrs = _unpack_rows(payload, header["rows"], header["n_nodes"], 4)
    return DualTrajectory(mesh, header["k"], *arrs)


# -- reports ------------------------------------------------------------------

def report_to_dict(report, h_km=None, k_hours=None):
    d = {"J": report.J_value, "eta_total": report.eta_total,
         "eta_h": report.eta_h, "eta_k": report.eta_k,
         "eta_beta": report.eta_beta,
         "effectivity": report.effectivity,
         "n_elements": report.n_elements, "n_steps": report.n_steps,
         "per_element": report.per_element_signed.tolist(),
         "per_step": report.per_step_signed.tolist()}
    if h_km is not None:
        d["h_km"] = h_km
    if k_hours is not None:
        d["k_hours"] = k_hours
    return d


def write_report_json(path, report, **labels):
    with open(path, "w") as fh:
        json.dump(report_to_dict(report, **labels), fh, indent=1,
                  sort_keys=True)
        fh.write("\n")


def append_csv_row(path, h_km, k_hours, report):
    new = not os.path.exists(path)
    with open(path, "a", newline="") as fh:
        w = csv.writer(fh)
        if new:
            w.writerow(CSV_COLUMNS)
        eff = report.effectivity
        w.writerow([_G % h_km, _G % k_hours, _G % report.J_value,
                    _G % report.eta_total, _G % report.eta_h,
                    _G % report.eta_k, _G % report.eta_beta,
                    "" if eff is None or np.isnan(eff) else _G % eff])


def read_csv_rows(path):
    """Rows of a study CSV as dicts with floats (empty cells become None)."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        missing = [c for c in CSV_COLUMNS if c not in cols]
        if missing:
            raise ValueError(f"study CSV lacks columns: {', '.join(missing)}")
        out = []
        for row in reader:
            out.append({c: (float(row[c]) if row[c] not in (None, "") else None)
                        for c in CSV_COLUMNS})
    return out
