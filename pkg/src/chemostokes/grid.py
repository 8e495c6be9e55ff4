"""Uniform axis-aligned box grids with cell-centered scalars and MAC vectors.

Scalars (n, c, c-tilde, pressure) live at cell centers; vector fields
(velocity, drift) store face-normal components on the staggered MAC faces.
All operators are dimension-generic over 2D and 3D.

Discrete calculus conventions:
  * gradient: face-centered difference of the two adjacent cells; faces on
    the domain boundary get 0 (homogeneous Neumann extension).
  * divergence: per-cell sum of face differences.
  * inner products weight cells and faces by the cell volume, which makes
    divergence the negative adjoint of gradient for vector fields with
    vanishing normal boundary components (summation by parts).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite

AXIS_NAMES = ("x", "y", "z")


@dataclass(frozen=True)
class Grid:
    """Uniform box grid on [0,Lx] x [0,Ly] (x [0,Lz])."""

    extents: tuple
    cells: tuple

    def __post_init__(self):
        extents = tuple(float(L) for L in self.extents)
        cells = tuple(int(N) for N in self.cells)
        object.__setattr__(self, "extents", extents)
        object.__setattr__(self, "cells", cells)
        if len(extents) not in (2, 3) or len(cells) != len(extents):
            raise ValueError(f"grid must be 2D or 3D, got {extents} / {cells}")
        if any(L <= 0 for L in extents):
            raise ValueError(f"extents must be positive, got {extents}")
        if any(N < 4 for N in cells):
            raise ValueError(f"need at least 4 cells per axis, got {cells}")

    @property
    def dim(self):
        return len(self.cells)

    @property
    def h(self):
        return tuple(L / N for L, N in zip(self.extents, self.cells))

    @property
    def cell_count(self):
        return int(np.prod(self.cells))

    @property
    def cell_volume(self):
        return float(np.prod(self.h))

    @property
    def volume(self):
        return float(np.prod(self.extents))

    def axis_centers(self, axis):
        """1D array of cell-center coordinates along one axis."""
        h = self.h[axis]
        return (np.arange(self.cells[axis]) + 0.5) * h

    def axis_faces(self, axis):
        """1D array of face coordinates along one axis (N+1 values)."""
        return np.arange(self.cells[axis] + 1) * self.h[axis]

    def cell_coords(self):
        """Tuple of broadcastable per-axis cell-center coordinate arrays."""
        return tuple(
            self._bcast(self.axis_centers(a), a, self.cells) for a in range(self.dim)
        )

    def face_coords(self, axis):
        """Broadcastable coordinates of the face centers normal to `axis`."""
        shape = self.face_shape(axis)
        out = []
        for a in range(self.dim):
            line = self.axis_faces(a) if a == axis else self.axis_centers(a)
            out.append(self._bcast(line, a, shape))
        return tuple(out)

    def face_shape(self, axis):
        shape = list(self.cells)
        shape[axis] += 1
        return tuple(shape)

    @staticmethod
    def _bcast(line, axis, shape):
        idx = [None] * len(shape)
        idx[axis] = slice(None)
        return line[tuple(idx)]


def _check_values(values, shape, what):
    arr = np.asarray(values, dtype=float)
    if arr.shape != tuple(shape):
        raise ValueError(f"{what}: expected shape {tuple(shape)}, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFinite(f"{what}: non-finite values")
    return arr


def broadcast_cells(grid, values):
    """Broadcast a (possibly partially shaped) array onto the cell lattice."""
    return np.broadcast_to(np.asarray(values, dtype=float), grid.cells).copy()


def broadcast_faces(grid, axis, values):
    """Broadcast onto the face lattice normal to `axis`."""
    return np.broadcast_to(
        np.asarray(values, dtype=float), grid.face_shape(axis)
    ).copy()


@dataclass
class ScalarField:
    """One real value per cell."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        self.values = _check_values(self.values, self.grid.cells, "ScalarField")

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.cells))

    @classmethod
    def full(cls, grid, value):
        return cls(grid, np.full(grid.cells, float(value)))

    @classmethod
    def from_function(cls, grid, func, t=0.0):
        return cls(grid, broadcast_cells(grid, func(grid.cell_coords(), t)))

    def copy(self):
        return ScalarField(self.grid, self.values.copy())

    def total(self):
        """Volume-weighted sum (mass)."""
        return float(self.values.sum() * self.grid.cell_volume)


@dataclass
class VectorField:
    """Face-normal components on MAC faces, one array per axis."""

    grid: Grid
    components: list

    def __post_init__(self):
        if len(self.components) != self.grid.dim:
            raise ValueError(
                f"VectorField: need {self.grid.dim} components, got {len(self.components)}"
            )
        self.components = [
            _check_values(c, self.grid.face_shape(a), f"VectorField[{AXIS_NAMES[a]}]")
            for a, c in enumerate(self.components)
        ]

    @classmethod
    def zeros(cls, grid):
        return cls(grid, [np.zeros(grid.face_shape(a)) for a in range(grid.dim)])

    def copy(self):
        return VectorField(self.grid, [c.copy() for c in self.components])

    def max_abs(self):
        return max(float(np.abs(c).max()) for c in self.components)

    def boundary_normal_faces_zero(self, tol=0.0):
        """True if every boundary face-normal component is within tol of 0."""
        for a, comp in enumerate(self.components):
            first = comp[_face_slice(a, 0, self.grid.dim)]
            last = comp[_face_slice(a, -1, self.grid.dim)]
            if np.abs(first).max() > tol or np.abs(last).max() > tol:
                return False
        return True


@dataclass
class State:
    """Full unknown triple plus simulation clock."""

    n: ScalarField
    c_tilde: ScalarField
    u: VectorField
    t: float = 0.0

    def __post_init__(self):
        if not (self.n.grid == self.c_tilde.grid == self.u.grid):
            raise ValueError("State: fields must share one grid")
        if self.t < 0:
            raise ValueError("State: t must be nonnegative")

    @property
    def grid(self):
        return self.n.grid

    def copy(self):
        return State(self.n.copy(), self.c_tilde.copy(), self.u.copy(), self.t)


def _face_slice(axis, index, dim):
    sl = [slice(None)] * dim
    sl[axis] = index
    return tuple(sl)


def interior_face_slice(axis, dim):
    """Slice selecting the interior faces of a face array along `axis`."""
    sl = [slice(None)] * dim
    sl[axis] = slice(1, -1)
    return tuple(sl)


def pad_neumann(values, width=1):
    """Ghost extension implementing a zero normal derivative at each face."""
    return np.pad(values, width, mode="edge")


def gradient(f: ScalarField) -> VectorField:
    """Centered face-difference gradient; boundary-normal faces are 0."""
    grid = f.grid
    comps = []
    for a in range(grid.dim):
        comp = np.zeros(grid.face_shape(a))
        lo = _shift_slice(a, slice(None, -1), grid.dim)
        hi = _shift_slice(a, slice(1, None), grid.dim)
        comp[interior_face_slice(a, grid.dim)] = (
            f.values[hi] - f.values[lo]
        ) / grid.h[a]
        comps.append(comp)
    return VectorField(grid, comps)


def divergence(v: VectorField) -> ScalarField:
    """Per-cell sum of face-difference fluxes."""
    grid = v.grid
    out = np.zeros(grid.cells)
    for a in range(grid.dim):
        comp = v.components[a]
        hi = _shift_slice(a, slice(1, None), grid.dim)
        lo = _shift_slice(a, slice(None, -1), grid.dim)
        out += (comp[hi] - comp[lo]) / grid.h[a]
    return ScalarField(grid, out)


def _shift_slice(axis, sl, dim):
    out = [slice(None)] * dim
    out[axis] = sl
    return tuple(out)


def face_average(f: ScalarField, axis) -> np.ndarray:
    """Two-cell arithmetic mean on faces; boundary faces copy the edge cell."""
    grid = f.grid
    padded = np.pad(f.values, _pad_width(axis, grid.dim), mode="edge")
    lo = _shift_slice(axis, slice(None, -1), grid.dim)
    hi = _shift_slice(axis, slice(1, None), grid.dim)
    return 0.5 * (padded[lo] + padded[hi])


def _pad_width(axis, dim):
    w = [(0, 0)] * dim
    w[axis] = (1, 1)
    return w


def face_to_center(v: VectorField):
    """Average the two bounding faces of each cell, per axis component."""
    grid = v.grid
    out = []
    for a in range(grid.dim):
        comp = v.components[a]
        lo = _shift_slice(a, slice(None, -1), grid.dim)
        hi = _shift_slice(a, slice(1, None), grid.dim)
        out.append(0.5 * (comp[lo] + comp[hi]))
    return out


def laplacian_neumann(values, grid: Grid) -> np.ndarray:
    """5/7-point Laplacian with reflecting ghosts (zero normal derivative)."""
    out = np.zeros(grid.cells)
    for a in range(grid.dim):
        padded = np.pad(values, _pad_width(a, grid.dim), mode="edge")
        lo = _shift_slice(a, slice(None, -2), grid.dim)
        mid = _shift_slice(a, slice(1, -1), grid.dim)
        hi = _shift_slice(a, slice(2, None), grid.dim)
        out += (padded[lo] - 2.0 * padded[mid] + padded[hi]) / grid.h[a] ** 2
    return out


def dot(u: VectorField, v: VectorField):
    """Volume-weighted inner product of two MAC vector fields."""
    grid = u.grid
    acc = 0.0
    for a in range(grid.dim):
        acc += float((u.components[a] * v.components[a]).sum())
    return acc * grid.cell_volume
