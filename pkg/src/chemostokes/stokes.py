"""Unsteady Stokes solver with no-slip walls, body force n*grad(phi), and
exactly divergence-free velocity.

The 2D route solves the monolithic backward-Euler saddle system
(I - dt*Lap)u' + dt*G p = u + dt*f, D u' = 0 with one cached sparse LU per
step size: its fixed points satisfy the discrete steady Stokes equations
exactly and pure-gradient forcing is annihilated exactly, neither of which
a non-incremental split projection can do (its steady residual is
dt*Lap(grad p), an O(dt) boundary-layer artifact). The 3D route falls back
to the split viscous-step-plus-Leray-projection scheme with conjugate
gradient solves; the Leray projection itself is also the public tool for
cleaning up initial data.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .errors import SolverDivergence
from .grid import Grid, ScalarField, VectorField, divergence, face_average, gradient
from .linsolve import (
    DEFAULT_RTOL,
    LinearOperatorSolver,
    assemble_flux_laplacian,
    assemble_stokes_saddle,
    assemble_velocity_helmholtz,
    default_method,
    pcg,
    pin_first_cell,
)

DIV_TOL = 1e-10


class StokesWorkspace:
    """Cached factorizations and tolerances; one per simulation thread."""

    def __init__(self, grid: Grid, method=None, rtol=DEFAULT_RTOL):
        self.grid = grid
        self.method = method or default_method(grid)
        self.rtol = rtol
        self.lap = assemble_flux_laplacian(grid)
        if self.method == "direct":
            self._pressure = LinearOperatorSolver(
                pin_first_cell(self.lap), method="direct", rtol=rtol
            )
        else:
            self._neg_lap = (-self.lap).tocsr()
        self._saddle = {}
        self._velocity = {}

    def pressure_solve(self, rhs):
        """Solve lap(p) = rhs for zero-mean p (rhs mean removed for
        compatibility)."""
        rhs = rhs - rhs.mean()
        if self.method == "direct":
            b = rhs.copy()
            b[0] = 0.0
            p = self._pressure.solve(b)
        else:
            # tighter target: the projection inherits this residual
            p = pcg(self._neg_lap, -rhs, rtol=min(self.rtol, 1e-13))
        p -= p.mean()
        res = float(np.abs(self.lap @ p - rhs).max())
        if res > 1e-8 * max(1.0, float(np.abs(rhs).max())):
            raise SolverDivergence(f"pressure Poisson residual {res:.3e}")
        return p

    def saddle_solver(self, dt):
        key = float(dt)
        if key not in self._saddle:
            if len(self._saddle) > 8:
                self._saddle.clear()
            K, shapes = assemble_stokes_saddle(self.grid, dt)
            self._saddle[key] = (spla.splu(K), shapes)
        return self._saddle[key]

    def velocity_solver(self, axis, dt):
        key = (axis, float(dt))
        if key not in self._velocity:
            if len(self._velocity) > 24:
                self._velocity.clear()
            A, shape = assemble_velocity_helmholtz(self.grid, axis, dt)
            self._velocity[key] = (
                LinearOperatorSolver(A, method=self.method, rtol=self.rtol),
                shape,
            )
        return self._velocity[key]


def leray_project(v: VectorField, workspace: StokesWorkspace):
    """Remove the discrete gradient part: returns (v - grad p, p) with
    div(v - grad p) at round-off and p zero-mean."""
    grid = v.grid
    scale = max(1.0, v.max_abs())
    if not v.boundary_normal_faces_zero(tol=1e-12 * scale):
        raise ValueError("leray_project: boundary-normal faces must vanish")
    div = divergence(v)
    p = workspace.pressure_solve(div.values.ravel())
    p_field = ScalarField(grid, p.reshape(grid.cells))
    gp = gradient(p_field)
    out = VectorField(
        grid, [v.components[a] - gp.components[a] for a in range(grid.dim)]
    )
    div_out = float(np.abs(divergence(out).values).max())
    if div_out > DIV_TOL * scale:
        raise SolverDivergence(
            f"projection left divergence {div_out:.3e} > {DIV_TOL * scale:.3e}"
        )
    return out, p_field


def _interior(axis, dim):
    sl = [slice(None)] * dim
    sl[axis] = slice(1, -1)
    return tuple(sl)


def _face_forces(grid, n, coeffs, t_new, extra_force):
    forces = []
    for a in range(grid.dim):
        force = face_average(n, a) * coeffs.grad_phi[a](grid.face_coords(a), t_new)
        if extra_force is not None and extra_force[a] is not None:
            force = force + extra_force[a](grid.face_coords(a), t_new)
        forces.append(force)
    return forces


def stokes_step(
    u: VectorField,
    n: ScalarField,
    coeffs,
    dt,
    t,
    workspace: StokesWorkspace,
    extra_force=None,
):
    """One backward-Euler Stokes step driven by n*grad(phi) evaluated at
    t + dt (implicit convention). Returns (new velocity, zero-mean pressure).
    """
    grid = u.grid
    forces = _face_forces(grid, n, coeffs, t + dt, extra_force)
    if workspace.method == "direct":
        return _step_monolithic(u, forces, dt, workspace)
    return _step_projection(u, forces, dt, workspace)


def _step_monolithic(u, forces, dt, workspace):
    grid = u.grid
    lu, shapes = workspace.saddle_solver(dt)
    sizes = [int(np.prod(s)) for s in shapes]
    rhs_parts = []
    for a in range(grid.dim):
        rhs_parts.append(
            (u.components[a] + dt * forces[a])[_interior(a, grid.dim)].ravel()
        )
    rhs_parts.append(np.zeros(grid.cell_count))
    rhs = np.concatenate(rhs_parts)
    rhs[sum(sizes)] = 0.0  # pressure gauge row
    sol = lu.solve(rhs)
    comps, offset = [], 0
    for a in range(grid.dim):
        comp = np.zeros(grid.face_shape(a))
        comp[_interior(a, grid.dim)] = sol[offset : offset + sizes[a]].reshape(
            shapes[a]
        )
        comps.append(comp)
        offset += sizes[a]
    p = sol[offset:]
    p = p - p.mean()
    out = VectorField(grid, comps)
    scale = max(1.0, out.max_abs())
    div_out = float(np.abs(divergence(out).values).max())
    if div_out > DIV_TOL * scale:
        raise SolverDivergence(f"saddle solve left divergence {div_out:.3e}")
    return out, ScalarField(grid, p.reshape(grid.cells))


def _step_projection(u, forces, dt, workspace):
    grid = u.grid
    comps = []
    for a in range(grid.dim):
        rhs = u.components[a] + dt * forces[a]
        solver, shape = workspace.velocity_solver(a, dt)
        x = solver.solve(
            rhs[_interior(a, grid.dim)].ravel(),
            x0=u.components[a][_interior(a, grid.dim)].ravel(),
        )
        comp = np.zeros(grid.face_shape(a))
        comp[_interior(a, grid.dim)] = x.reshape(shape)
        comps.append(comp)
    u_star = VectorField(grid, comps)
    out, p = leray_project(u_star, workspace)
    return out, ScalarField(grid, p.values / dt)
