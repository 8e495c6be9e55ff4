"""Transport and zero-order terms: chemotactic drift assembly, monotone
upwind advection of the cell density, advective derivatives for the oxygen
equation, and the reaction/penalty sources.

The chemotactic flux is treated as drift-advection of n with donor-cell
upwinding, which preserves n >= 0 under the CFL bound. The oxygen advective
term defaults to centered differencing (cell Peclet numbers stay well below
one here); a first-order upwind variant is available.
"""

from __future__ import annotations

import numpy as np

from .errors import CflViolation
from .grid import Grid, ScalarField, VectorField, face_average, face_to_center

CFL_SLACK = 1.0 + 1e-9


def chemo_drift(c_tilde: ScalarField, homog, chi, t) -> VectorField:
    """Face drift velocity chi*(e^{g1} grad c_tilde + e^{g1} c_tilde grad g1
    + grad g2); g-derivatives are evaluated analytically at face centers.

    Boundary faces carry the nonzero normal component
    chi * e^{g1} * c_tilde * d(g1)/d(axis), the discrete footprint of the
    boundary mass-flux term that drives the mass budget.
    """
    grid = c_tilde.grid
    comps = []
    for a in range(grid.dim):
        h = grid.h[a]
        mid = [slice(None)] * grid.dim
        mid[a] = slice(1, -1)
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -1)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(1, None)
        dct = np.zeros(grid.face_shape(a))
        dct[tuple(mid)] = (c_tilde.values[tuple(hi)] - c_tilde.values[tuple(lo)]) / h
        ctf = face_average(c_tilde, a)
        eg1 = np.exp(homog.g1_faces(a, t))
        comp = chi * (eg1 * dct + eg1 * ctf * homog.dg1_faces(a, t)
                      + homog.dg2_faces(a, t))
        comps.append(comp)
    return VectorField(grid, comps)


def cfl_number(v: VectorField, dt):
    """dt * sum over axes of max |v_axis| / h_axis (monotonicity bound)."""
    grid = v.grid
    rate = 0.0
    for a in range(grid.dim):
        rate += float(np.abs(v.components[a]).max()) / grid.h[a]
    return dt * rate


def advect_upwind(q: ScalarField, v: VectorField, dt) -> ScalarField:
    """Conservative donor-cell flux divergence increment -div(v * q_up).

    Returns the rate: q + dt * increment is the explicit update. Boundary
    faces use the edge cell as donor (zero-normal-derivative ghost), so the
    total mass change equals the boundary flux of v alone.
    """
    grid = q.grid
    cfl = cfl_number(v, dt)
    if cfl > CFL_SLACK:
        raise CflViolation(f"advective CFL {cfl:.3f} > 1 (dt too large)")
    out = np.zeros(grid.cells)
    for a in range(grid.dim):
        h = grid.h[a]
        comp = v.components[a]
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        qp = np.pad(q.values, pad, mode="edge")
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -1)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(1, None)
        q_up = np.where(comp > 0.0, qp[tuple(lo)], qp[tuple(hi)])
        flux = comp * q_up
        out -= (flux[tuple(hi)] - flux[tuple(lo)]) / h
    return ScalarField(grid, out)


def advective_derivative(q_values, w_cells, grid: Grid, scheme="centered"):
    """sum_a w_a * d(q)/d(x_a) at cell centers with Neumann ghosts.

    scheme: "centered" (second order) or "upwind" (first order, monotone).
    """
    out = np.zeros(grid.cells)
    for a in range(grid.dim):
        h = grid.h[a]
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        qp = np.pad(q_values, pad, mode="edge")
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -2)
        mid = [slice(None)] * grid.dim
        mid[a] = slice(1, -1)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(2, None)
        w = w_cells[a]
        if scheme == "centered":
            out += w * (qp[tuple(hi)] - qp[tuple(lo)]) / (2.0 * h)
        elif scheme == "upwind":
            back = (qp[tuple(mid)] - qp[tuple(lo)]) / h
            fwd = (qp[tuple(hi)] - qp[tuple(mid)]) / h
            out += np.where(w > 0.0, w * back, w * fwd)
        else:
            raise ValueError(f"unknown advection scheme {scheme!r}")
    return out


def reactions_n(n: ScalarField, coeffs, reg, t) -> ScalarField:
    """Logistic growth, source, and (when active) the regularization
    penalties: mu*n*(a-n) + g - eps*|n|^s*n + 2*A*max(-n, 0)."""
    grid = n.grid
    coords = grid.cell_coords()
    a_vals = coeffs.a(coords, t)
    g_vals = coeffs.g(coords, t)
    out = coeffs.mu * n.values * (a_vals - n.values) + g_vals
    if reg is not None and reg.penalties_on:
        if reg.eps > 0.0:
            out -= reg.eps * np.abs(n.values) ** reg.s * n.values
        if reg.penalty_a > 0.0:
            out += 2.0 * reg.penalty_a * np.maximum(-n.values, 0.0)
    return ScalarField(grid, out)


def rhs_c(
    c_tilde: ScalarField,
    n: ScalarField,
    u: VectorField,
    homog,
    t,
    scheme="centered",
    use_n_plus=False,
) -> ScalarField:
    """Explicit right-hand side of the transformed oxygen equation: the
    advective term -(u - 2 grad g1) . grad c_tilde plus the two reaction
    brackets; diffusion is handled implicitly elsewhere.

    With g1 = g2 = 0 this reduces to -u.grad(c_tilde) - n*c_tilde.
    """
    grid = c_tilde.grid
    u_c = face_to_center(u)
    grad_g1 = homog.grad_g1_cells(t)
    grad_g2 = homog.grad_g2_cells(t)
    g1 = homog.g1_cells(t)
    n_eff = np.maximum(n.values, 0.0) if use_n_plus else n.values

    w = [u_c[a] - 2.0 * grad_g1[a] for a in range(grid.dim)]
    adv = -advective_derivative(c_tilde.values, w, grid, scheme=scheme)

    u_dot_g1 = sum(u_c[a] * grad_g1[a] for a in range(grid.dim))
    u_dot_g2 = sum(u_c[a] * grad_g2[a] for a in range(grid.dim))
    g1_sq = sum(g * g for g in grad_g1)
    bracket1 = (
        g1_sq + homog.lap_g1_cells(t) - n_eff - u_dot_g1 - homog.g1t_cells(t)
    )
    bracket2 = (
        homog.lap_g2_cells(t) - u_dot_g2 - n_eff * homog.g2_cells(t)
        - homog.g2t_cells(t)
    )
    vals = adv + bracket1 * c_tilde.values + bracket2 * np.exp(-g1)
    return ScalarField(grid, vals)
