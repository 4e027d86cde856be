"""Output writers: legacy VTK structured points, CSV probes, state snapshots."""

from __future__ import annotations

import csv
import io

import numpy as np

from .grid import Grid

UNITS = {
    "phi": "1",
    "active_count": "1",
    "psi_elastic": "J/m3",
    "psi_interfacial": "J/m3",
    "strain": "1",
    "stress": "Pa",
    "dg": "J/m3",
}

COMP_NAMES = {
    3: ("xx", "yy", "xy"),
    6: ("xx", "yy", "zz", "yz", "xz", "xy"),
}


def _component_labels(name: str, ncomp: int):
    if ncomp == 1:
        return [name]
    if ncomp in COMP_NAMES:
        return [f"{name}_{c}" for c in COMP_NAMES[ncomp]]
    return [f"{name}_{k}" for k in range(ncomp)]


def write_vtk(path, grid: Grid, cell_data: dict):
    """Legacy ASCII structured-points file with per-cell arrays.

    ``cell_data`` maps names to arrays of shape ``(ncells,)`` or
    ``(ncells, k)``; multi-component arrays are written as VTK FIELD data.
    """
    dims = grid.dims + (1,) * (3 - len(grid.dims))
    n = grid.ncells
    buf = io.StringIO()
    buf.write("# vtk DataFile Version 3.0\n")
    buf.write("mpfel fields\n")
    buf.write("ASCII\n")
    buf.write("DATASET STRUCTURED_POINTS\n")
    point_dims = tuple(d + 1 if d > 1 else 1 for d in dims)
    buf.write(f"DIMENSIONS {point_dims[0]} {point_dims[1]} {point_dims[2]}\n")
    buf.write("ORIGIN 0 0 0\n")
    buf.write(f"SPACING {grid.spacing:.9g} {grid.spacing:.9g} {grid.spacing:.9g}\n")
    buf.write(f"CELL_DATA {n}\n")
    scalars = {k: v for k, v in cell_data.items() if np.asarray(v).ndim == 1}
    fields = {k: v for k, v in cell_data.items() if np.asarray(v).ndim == 2}

    def vtk_order(arr):
        # VTK runs x fastest; our flat arrays run the last axis fastest
        return np.asarray(arr).reshape(grid.dims, order="C").ravel(order="F")

    for name, arr in scalars.items():
        buf.write(f"SCALARS {name} double 1\n")
        buf.write("LOOKUP_TABLE default\n")
        vals = vtk_order(arr)
        buf.write("\n".join(f"{v:.9g}" for v in vals))
        buf.write("\n")
    if fields:
        buf.write(f"FIELD FieldData {len(fields)}\n")
        for name, arr in fields.items():
            arr = np.asarray(arr)
            k = arr.shape[1]
            buf.write(f"{name} {k} {n} double\n")
            comps = np.stack([vtk_order(arr[:, c]) for c in range(k)], axis=-1)
            for row in comps:
                buf.write(" ".join(f"{v:.9g}" for v in row))
                buf.write("\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def sample_polyline(grid: Grid, start, end):
    """Nearest-cell indices along a segment given in cell coordinates."""
    start = np.asarray(start, dtype=float)
    end = np.asarray(end, dtype=float)
    if start.shape != (grid.dim,) or end.shape != (grid.dim,):
        raise ValueError(f"probe endpoints must have {grid.dim} coordinates")
    span = int(np.ceil(np.max(np.abs(end - start))))
    npts = max(span + 1, 1)
    ts = np.linspace(0.0, 1.0, npts)
    cells = []
    for t in ts:
        p = np.rint(start + t * (end - start)).astype(int)
        idx = tuple(int(c) % n for c, n in zip(p, grid.dims))
        if not cells or cells[-1] != idx:
            cells.append(idx)
    return cells


def probe_rows(grid: Grid, cells, cell_data: dict):
    """Header and rows for a probe over the given cell indices."""
    header = ["index"] + [f"{ax}_m" for ax in "xyz"[: grid.dim]]
    flat_names = []
    for name, arr in cell_data.items():
        arr = np.asarray(arr)
        ncomp = 1 if arr.ndim == 1 else arr.shape[1]
        base = name.split("_")[0]
        unit = UNITS.get(base, UNITS.get(name, "1"))
        for label in _component_labels(name, ncomp):
            flat_names.append(f"{label}_{unit}".replace("/", "_per_"))
    header += flat_names
    rows = []
    for k, idx in enumerate(cells):
        flat = int(np.ravel_multi_index(idx, grid.dims))
        row = [k] + [c * grid.spacing for c in idx]
        for arr in cell_data.values():
            arr = np.asarray(arr)
            if arr.ndim == 1:
                row.append(float(arr[flat]))
            else:
                row.extend(float(v) for v in arr[flat])
        rows.append(row)
    return header, rows


def write_probe_csv(path, grid: Grid, cells, cell_data: dict):
    header, rows = probe_rows(grid, cells, cell_data)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_state_npz(path, grid: Grid, phase_names, cell_data: dict):
    """Snapshot of all field data for offline probing."""
    np.savez_compressed(
        path,
        dims=np.array(grid.dims),
        spacing=grid.spacing,
        phase_names=np.array(phase_names),
        field_names=np.array(sorted(cell_data)),
        **{f"field_{k}": np.asarray(v) for k, v in cell_data.items()},
    )


def load_state_npz(path):
    data = np.load(path, allow_pickle=False)
    grid = Grid(tuple(int(d) for d in data["dims"]), float(data["spacing"]))
    names = [str(s) for s in data["field_names"]]
    fields = {name: data[f"field_{name}"] for name in names}
    return grid, [str(s) for s in data["phase_names"]], fields
