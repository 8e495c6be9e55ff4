"""Sparse operator assembly and linear solvers.

Two solver routes exist for every implicit operator:

  * "direct": sparse LU (SuperLU). Exact to round-off, which keeps the
    M-matrix solves sign-preserving at the 1e-12 level and is fast at 2D
    desk scale. 3D factorizations are too expensive, so
  * "cg": diagonally preconditioned conjugate gradient, relative tolerance
    1e-10, capped at 10*N iterations. Deterministic (fixed summation order).

Both verify the final residual and raise SolverDivergence on failure.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverDivergence
from .grid import Grid

DEFAULT_RTOL = 1e-10


def default_method(grid: Grid):
    return "direct" if grid.dim == 2 else "cg"


def assemble_flux_laplacian(grid: Grid, face_mobility=None):
    """div(k grad) on cell values with zero-flux (Neumann) boundaries.

    face_mobility: per-axis arrays on the face lattices (interior faces
    used); None means unit mobility. Returns CSC acting on raveled cells.
    """
    cells = grid.cells
    n = grid.cell_count
    idx = np.arange(n).reshape(cells)
    rows, cols, data = [], [], []
    for a in range(grid.dim):
        inv_h2 = 1.0 / grid.h[a] ** 2
        sl_int = [slice(None)] * grid.dim
        sl_int[a] = slice(1, -1)
        if face_mobility is None:
            k = np.full([c - 1 if ax == a else c for ax, c in enumerate(cells)], inv_h2)
        else:
            k = face_mobility[a][tuple(sl_int)] * inv_h2
        sl_lo = [slice(None)] * grid.dim
        sl_lo[a] = slice(None, -1)
        sl_hi = [slice(None)] * grid.dim
        sl_hi[a] = slice(1, None)
        lo = idx[tuple(sl_lo)].ravel()
        hi = idx[tuple(sl_hi)].ravel()
        kf = k.ravel()
        rows.extend((lo, hi, lo, hi))
        cols.extend((lo, hi, hi, lo))
        data.extend((-kf, -kf, kf, kf))
    A = sp.coo_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(n, n),
    )
    return A.tocsc()


def _tridiag(main, off, size):
    return sp.diags([np.full(size - 1, off), main, np.full(size - 1, off)], [-1, 0, 1])


def _lap1d_dirichlet_node(size, h):
    """1D Laplacian for unknowns on interior nodes, zero at the end nodes."""
    main = np.full(size, -2.0)
    return _tridiag(main, 1.0, size) / h**2


def _lap1d_dirichlet_half(size, h):
    """1D Laplacian for cell-centered unknowns with a wall half a cell out
    (ghost = -first interior value, so the wall value vanishes)."""
    main = np.full(size, -2.0)
    main[0] = -3.0
    main[-1] = -3.0
    return _tridiag(main, 1.0, size) / h**2


def assemble_velocity_helmholtz(grid: Grid, axis, dt):
    """I - dt*Laplacian on the interior-face lattice of one velocity
    component with no-slip walls."""
    shape = [grid.cells[a] - 1 if a == axis else grid.cells[a] for a in range(grid.dim)]
    terms = []
    for a in range(grid.dim):
        mats = []
        for b in range(grid.dim):
            if b == a:
                if b == axis:
                    mats.append(_lap1d_dirichlet_node(shape[b], grid.h[b]))
                else:
                    mats.append(_lap1d_dirichlet_half(shape[b], grid.h[b]))
            else:
                mats.append(sp.eye(shape[b]))
        term = mats[0]
        for m in mats[1:]:
            term = sp.kron(term, m)
        terms.append(term)
    lap = sum(terms)
    n = int(np.prod(shape))
    return (sp.eye(n) - dt * lap).tocsc(), tuple(shape)


def pin_first_cell(A):
    """Replace the first row by an identity row (gauge fix for a singular
    Neumann operator; valid for compatible right-hand sides)."""
    A = A.tolil(copy=True)
    A.rows[0] = [0]
    A.data[0] = [1.0]
    return A.tocsc()


def assemble_face_gradient(grid: Grid, axis):
    """Discrete gradient from cells to the interior faces of one axis."""
    cells = grid.cells
    ncells = grid.cell_count
    idx = np.arange(ncells).reshape(cells)
    sl_lo = [slice(None)] * grid.dim
    sl_lo[axis] = slice(None, -1)
    sl_hi = [slice(None)] * grid.dim
    sl_hi[axis] = slice(1, None)
    lo = idx[tuple(sl_lo)].ravel()
    hi = idx[tuple(sl_hi)].ravel()
    nfaces = lo.size
    rows = np.concatenate([np.arange(nfaces), np.arange(nfaces)])
    cols = np.concatenate([hi, lo])
    inv_h = 1.0 / grid.h[axis]
    data = np.concatenate([np.full(nfaces, inv_h), np.full(nfaces, -inv_h)])
    return sp.coo_matrix((data, (rows, cols)), shape=(nfaces, ncells)).tocsc()


def assemble_stokes_saddle(grid: Grid, dt):
    """Monolithic backward-Euler Stokes matrix on [u interior faces; p cells]:

        [I - dt*Lap] u' + dt*G p = rhs_u,     D u' = 0,

    with the pressure gauge pinned at the first cell. Returns (K, shapes),
    where shapes are the per-axis interior-face lattice shapes."""
    blocks_A, blocks_G, shapes = [], [], []
    for a in range(grid.dim):
        A, shape = assemble_velocity_helmholtz(grid, a, dt)
        G = assemble_face_gradient(grid, a)
        blocks_A.append(A)
        blocks_G.append(G)
        shapes.append(shape)
    ncells = grid.cell_count
    rows = []
    for a in range(grid.dim):
        row = [None] * (grid.dim + 1)
        row[a] = blocks_A[a]
        row[grid.dim] = dt * blocks_G[a]
        rows.append(row)
    last = [-blocks_G[a].T for a in range(grid.dim)] + [
        sp.coo_matrix((ncells, ncells))
    ]
    rows.append(last)
    K = sp.bmat(rows, format="lil")
    pin = sum(int(np.prod(s)) for s in shapes)
    K.rows[pin] = [pin]
    K.data[pin] = [1.0]
    return K.tocsc(), shapes


class LinearOperatorSolver:
    """One assembled SPD/M-matrix operator with a chosen solve route."""

    def __init__(self, A, method="direct", rtol=DEFAULT_RTOL, maxiter=None):
        self.A = A.tocsc()
        self.A_csr = A.tocsr()
        self.method = method
        self.rtol = rtol
        self.maxiter = maxiter
        self._lu = None
        if method == "direct":
            self._lu = spla.splu(self.A)
        self._diag = self.A.diagonal()

    def solve(self, b, x0=None):
        b = np.asarray(b, dtype=float).ravel()
        if self.method == "direct":
            x = self._lu.solve(b)
        else:
            x = pcg(
                self.A_csr,
                b,
                x0=x0,
                rtol=self.rtol,
                maxiter=self.maxiter,
                diag=self._diag,
            )
        _check_residual(self.A_csr, x, b, self.rtol)
        return x


def pcg(A, b, x0=None, rtol=DEFAULT_RTOL, maxiter=None, diag=None):
    """Conjugate gradient with diagonal (Jacobi) preconditioning."""
    n = b.size
    if maxiter is None:
        maxiter = 10 * n
    if diag is None:
        diag = A.diagonal()
    inv_diag = 1.0 / diag
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float).ravel().copy()
    r = b - A @ x
    bnorm = float(np.linalg.norm(b))
    target = rtol * max(bnorm, 1e-300)
    if float(np.linalg.norm(r)) <= target:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    for _ in range(maxiter):
        Ap = A @ p
        alpha = rz / float(p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        if float(np.linalg.norm(r)) <= target:
            return x
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverDivergence(
        f"PCG stalled: residual {np.linalg.norm(r):.3e} > {target:.3e} "
        f"after {maxiter} iterations"
    )


def _check_residual(A, x, b, rtol):
    res = float(np.linalg.norm(b - A @ x))
    scale = max(float(np.linalg.norm(b)), 1.0)
    if res > 100.0 * rtol * scale:
        raise SolverDivergence(f"linear solve residual {res:.3e} exceeds tolerance")
