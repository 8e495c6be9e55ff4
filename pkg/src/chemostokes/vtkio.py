"""Snapshot output: VTK legacy STRUCTURED_POINTS ASCII files (one per field)
and raw CSV dumps (cell index, coordinates, value).

Cell-centered data is written as POINT_DATA on the lattice of cell centers
(origin at h/2, spacing h). Velocity is interpolated to cell centers and
written as a VECTORS attribute. All floats carry 17 significant digits so
two deterministic runs produce byte-identical files.
"""

from __future__ import annotations

import os

import numpy as np

from .grid import Grid, ScalarField, VectorField, face_to_center

FMT = "%.17g"


def _header(grid: Grid, title):
    dims = list(grid.cells) + [1] * (3 - grid.dim)
    origin = [h / 2.0 for h in grid.h] + [0.0] * (3 - grid.dim)
    spacing = list(grid.h) + [1.0] * (3 - grid.dim)
    lines = [
        "# vtk DataFile Version 3.0",
        title,
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        "DIMENSIONS %d %d %d" % tuple(dims),
        "ORIGIN " + " ".join(FMT % o for o in origin),
        "SPACING " + " ".join(FMT % s for s in spacing),
        "POINT_DATA %d" % grid.cell_count,
    ]
    return "\n".join(lines)


def _flatten(values):
    # VTK expects x varying fastest
    return values.flatten(order="F")


def write_vtk_scalar(path, field: ScalarField, name):
    grid = field.grid
    with open(path, "w") as fh:
        fh.write(_header(grid, name) + "\n")
        fh.write(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
        for v in _flatten(field.values):
            fh.write(FMT % v + "\n")


def write_vtk_vector(path, vec: VectorField, name):
    grid = vec.grid
    centered = face_to_center(vec)
    while len(centered) < 3:
        centered.append(np.zeros(grid.cells))
    flat = [_flatten(c) for c in centered]
    with open(path, "w") as fh:
        fh.write(_header(grid, name) + "\n")
        fh.write(f"VECTORS {name} double\n")
        for vals in zip(*flat):
            fh.write(" ".join(FMT % v for v in vals) + "\n")


def write_csv_field(path, field: ScalarField, name="value"):
    grid = field.grid
    coords = np.meshgrid(*(grid.axis_centers(a) for a in range(grid.dim)), indexing="ij")
    with open(path, "w") as fh:
        axis_names = ["x", "y", "z"][: grid.dim]
        fh.write("index," + ",".join(axis_names) + f",{name}\n")
        flat_coords = [c.ravel() for c in coords]
        flat_vals = field.values.ravel()
        for i in range(grid.cell_count):
            row = [str(i)]
            row.extend(FMT % c[i] for c in flat_coords)
            row.append(FMT % flat_vals[i])
            fh.write(",".join(row) + "\n")


class SnapshotWriter:
    """Integrator hook writing periodic snapshots of n, c_tilde, c, u."""

    def __init__(self, out_dir, homog, stride=0, prefix="snap"):
        self.out_dir = out_dir
        self.homog = homog
        self.stride = int(stride)
        self.prefix = prefix
        self.count = 0
        self.written = 0
        os.makedirs(out_dir, exist_ok=True)

    def __call__(self, before, after, record):
        self.count += 1
        if self.stride <= 0 or self.count % self.stride != 0:
            return
        self.write(after)

    def write(self, state):
        from .coeffs import from_homogeneous

        tag = f"{self.prefix}_{self.written:04d}"
        write_vtk_scalar(
            os.path.join(self.out_dir, f"{tag}_n.vtk"), state.n, "n"
        )
        write_vtk_scalar(
            os.path.join(self.out_dir, f"{tag}_ctilde.vtk"), state.c_tilde, "ctilde"
        )
        c = from_homogeneous(state.c_tilde, self.homog, state.t)
        write_vtk_scalar(os.path.join(self.out_dir, f"{tag}_c.vtk"), c, "c")
        write_vtk_vector(os.path.join(self.out_dir, f"{tag}_u.vtk"), state.u, "u")
        write_csv_field(os.path.join(self.out_dir, f"{tag}_n.csv"), state.n, "n")
        self.written += 1
