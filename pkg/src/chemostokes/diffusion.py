"""Degenerate porous-medium diffusion, linear oxygen diffusion, and the
biharmonic regularizer, with semi-implicit backward-Euler solves.

All operators use homogeneous Neumann ghost layers (zero normal derivative),
which makes them conservative: volume-weighted outputs sum to zero to
round-off. The implicit cell-density solve freezes the mobility at the
current iterate (one Picard linearization), so the system matrix is a
symmetric M-matrix and the solve preserves nonnegativity.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError
from .grid import Grid, ScalarField, laplacian_neumann
from .linsolve import (
    DEFAULT_RTOL,
    LinearOperatorSolver,
    assemble_flux_laplacian,
    default_method,
)


@dataclass(frozen=True)
class Regularization:
    """Knobs of the fourth-order regularized system.

    eps doubles as the mobility floor (|n|+eps)^(m-1) and, when the
    penalties are switched on, as the coefficient of the -eps*|n|^s*n sink.
    penalty_a is the magnitude of the positivity-restoring source 2*A*n_-.
    """

    eps: float = 0.0
    delta: float = 0.0
    s: float = 0.0
    penalty_a: float = 0.0
    penalties_on: bool = False

    def validate(self, m):
        if self.eps < 0 or self.delta < 0 or self.penalty_a < 0:
            raise ConfigError("regularization knobs eps, delta, A must be >= 0")
        if self.penalties_on and self.eps > 0:
            lo = max(2.0 * (m - 1.0), 2.0)
            hi = 5.0 * m - 1.0
            if not (lo < self.s <= hi):
                raise ConfigError(
                    f"penalty exponent s={self.s} outside (max(2(m-1),2), 5m-1]"
                    f" = ({lo}, {hi}] for m={m}"
                )


def mobility_cells(n_values, m, eps):
    """Cell mobility m*(|n|+eps)^(m-1); exact constant m when m == 1."""
    if m == 1.0:
        return np.full_like(n_values, 1.0)
    return m * (np.abs(n_values) + eps) ** (m - 1.0)


def mobility_faces(n_values, grid: Grid, m, eps):
    """Arithmetic-mean face mobilities, one array per axis (interior faces)."""
    cell_mob = mobility_cells(n_values, m, eps)
    faces = []
    for a in range(grid.dim):
        shape = grid.face_shape(a)
        out = np.zeros(shape)
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -1)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(1, None)
        mid = [slice(None)] * grid.dim
        mid[a] = slice(1, -1)
        out[tuple(mid)] = 0.5 * (cell_mob[tuple(lo)] + cell_mob[tuple(hi)])
        faces.append(out)
    return faces


def _flux_divergence(values, grid: Grid, face_mob):
    out = np.zeros(grid.cells)
    for a in range(grid.dim):
        h = grid.h[a]
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -1)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(1, None)
        mid = [slice(None)] * grid.dim
        mid[a] = slice(1, -1)
        flux = np.zeros(grid.face_shape(a))
        flux[tuple(mid)] = face_mob[a][tuple(mid)] * (
            values[tuple(hi)] - values[tuple(lo)]
        ) / h
        out += (flux[tuple(hi)] - flux[tuple(lo)]) / h
    return out


def pme_apply(n: ScalarField, m, eps) -> ScalarField:
    """Flux-form porous-medium operator div(m*(|n|+eps)^(m-1) grad n)."""
    grid = n.grid
    mob = mobility_faces(n.values, grid, m, eps)
    return ScalarField(grid, _flux_divergence(n.values, grid, mob))


def biharmonic_apply(n: ScalarField, delta) -> ScalarField:
    """delta * Lap(Lap n) with zero normal derivative of both n and Lap n."""
    grid = n.grid
    if delta == 0.0:
        return ScalarField.zeros(grid)
    inner = laplacian_neumann(n.values, grid)
    outer = laplacian_neumann(inner, grid)
    return ScalarField(grid, delta * outer)


@lru_cache(maxsize=16)
def _unit_laplacian(grid: Grid):
    return assemble_flux_laplacian(grid)


@lru_cache(maxsize=16)
def _biharmonic_matrix(grid: Grid):
    L = _unit_laplacian(grid)
    return (L @ L).tocsc()


@lru_cache(maxsize=16)
def _c_solver(grid: Grid, dt, method, rtol):
    n = grid.cell_count
    A = (sp.eye(n) - dt * _unit_laplacian(grid)).tocsc()
    return LinearOperatorSolver(A, method=method, rtol=rtol)


def implicit_diffuse_c(c_tilde: ScalarField, dt, method=None, rtol=DEFAULT_RTOL):
    """Backward-Euler unit-mobility diffusion step for the oxygen variable."""
    grid = c_tilde.grid
    method = method or default_method(grid)
    solver = _c_solver(grid, float(dt), method, rtol)
    x = solver.solve(c_tilde.values.ravel(), x0=c_tilde.values.ravel())
    return ScalarField(grid, x.reshape(grid.cells))


def implicit_diffuse_n(
    n: ScalarField, dt, m, eps=0.0, delta=0.0, method=None, rtol=DEFAULT_RTOL
):
    """Backward-Euler porous-medium step with mobility frozen at the input
    (one Picard linearization), plus the dissipative biharmonic term when
    delta > 0. Conserves the volume-weighted sum of n."""
    grid = n.grid
    method = method or default_method(grid)
    mob = mobility_faces(n.values, grid, m, eps)
    A = sp.eye(grid.cell_count) - dt * assemble_flux_laplacian(grid, mob)
    if delta > 0.0:
        A = A + dt * delta * _biharmonic_matrix(grid)
    solver = LinearOperatorSolver(A.tocsc(), method=method, rtol=rtol)
    x = solver.solve(n.values.ravel(), x0=n.values.ravel())
    return ScalarField(grid, x.reshape(grid.cells))
