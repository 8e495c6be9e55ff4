import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from chemostokes.coeffs import Coefficients
from chemostokes.expressions import SpaceTimeFunction as F
from chemostokes.grid import Grid, ScalarField, VectorField, divergence, gradient
from chemostokes.stokes import StokesWorkspace, leray_project, stokes_step


def box(n):
    return Grid((1.0, 1.0), (n, n))


def zero_normal_random(g, seed=0):
    rng = np.random.default_rng(seed)
    comps = []
    for a in range(g.dim):
        c = rng.normal(size=g.face_shape(a))
        sl = [slice(None)] * g.dim
        sl[a] = 0
        c[tuple(sl)] = 0.0
        sl[a] = -1
        c[tuple(sl)] = 0.0
        comps.append(c)
    return VectorField(g, comps)


def coeffs_with_force(fx="1", fy="0"):
    return Coefficients(F("0"), F("0"), (F(fx), F(fy)), 0.0, 0.0, 2.0, 1.0)


def test_projection_divergence_and_idempotence():
    g = box(32)
    ws = StokesWorkspace(g)
    v = zero_normal_random(g, seed=1)
    out, p = leray_project(v, ws)
    scale = max(1.0, v.max_abs())
    assert np.abs(divergence(out).values).max() <= 1e-10 * scale
    again, _ = leray_project(out, ws)
    for a in range(2):
        assert np.abs(again.components[a] - out.components[a]).max() <= 1e-10 * scale
    # zero-mean pressure gauge
    assert abs(p.values.mean()) <= 1e-12


def test_projection_kills_gradients():
    g = box(32)
    ws = StokesWorkspace(g)
    p0 = ScalarField.from_function(
        g, lambda c, t: np.cos(np.pi * c[0]) * np.cos(2 * np.pi * c[1])
    )
    v = gradient(p0)
    out, _ = leray_project(v, ws)
    assert out.max_abs() <= 1e-8 * max(1.0, v.max_abs())


def test_projection_orthogonal_to_gradients():
    g = box(24)
    ws = StokesWorkspace(g)
    v = zero_normal_random(g, seed=2)
    out, _ = leray_project(v, ws)
    rng = np.random.default_rng(3)
    q = ScalarField(g, rng.normal(size=g.cells))
    gq = gradient(q)
    inner = sum(
        float((out.components[a] * gq.components[a]).sum()) for a in range(2)
    ) * g.cell_volume
    assert abs(inner) <= 1e-9 * max(1.0, out.max_abs())


def test_projection_requires_zero_normals():
    g = box(16)
    ws = StokesWorkspace(g)
    comps = [np.ones(g.face_shape(0)), np.zeros(g.face_shape(1))]
    with pytest.raises(ValueError):
        leray_project(VectorField(g, comps), ws)


def test_stokes_zero_forcing_stays_zero():
    g = box(16)
    ws = StokesWorkspace(g)
    u0 = VectorField.zeros(g)
    n = ScalarField.zeros(g)
    u1, p = stokes_step(u0, n, coeffs_with_force(), 0.05, 0.0, ws)
    assert u1.max_abs() == 0.0
    assert np.abs(p.values - p.values.mean()).max() <= 1e-12


def test_stokes_gradient_forcing_projected_away():
    # n*grad(phi) = grad(psi) for n = 1, phi = psi: projection removes it
    g = box(24)
    ws = StokesWorkspace(g)
    u0 = VectorField.zeros(g)
    n = ScalarField.full(g, 1.0)
    # grad phi = (x, y) = grad(|x|^2/2), a pure gradient
    u1, _ = stokes_step(u0, n, coeffs_with_force("x", "y"), 0.05, 0.0, ws)
    assert u1.max_abs() <= 1e-8


def test_stokes_no_slip_and_divergence_invariants():
    g = box(24)
    ws = StokesWorkspace(g)
    u = VectorField.zeros(g)
    n = ScalarField.from_function(g, lambda c, t: 1.0 + 0.5 * np.cos(np.pi * c[0]) * np.cos(np.pi * c[1]))
    coeffs = coeffs_with_force("sin(pi*y)", "sin(pi*x)")
    for _ in range(5):
        u, _ = stokes_step(u, n, coeffs, 0.02, 0.0, ws)
        for a in range(2):
            sl = [slice(None)] * 2
            sl[a] = 0
            assert np.abs(u.components[a][tuple(sl)]).max() == 0.0
            sl[a] = -1
            assert np.abs(u.components[a][tuple(sl)]).max() == 0.0
        assert np.abs(divergence(u).values).max() <= 1e-10 * max(1.0, u.max_abs())


def test_stokes_energy_decay_unforced():
    g = box(16)
    ws = StokesWorkspace(g)
    u, _ = leray_project(zero_normal_random(g, seed=4), ws)
    n = ScalarField.zeros(g)
    coeffs = coeffs_with_force("0", "0")
    def energy(v):
        return sum(float((c**2).sum()) for c in v.components)
    e = energy(u)
    for _ in range(10):
        u, _ = stokes_step(u, n, coeffs, 0.05, 0.0, ws)
        e_new = energy(u)
        assert e_new <= e * (1.0 + 1e-12)
        e = e_new


def _steady_stokes_oracle(g, force_x, force_y):
    """Direct saddle-point solve of -Lap u + grad p = f, div u = 0 with
    no-slip, assembled independently on the MAC layout."""
    shapes = [(g.cells[0] - 1, g.cells[1]), (g.cells[0], g.cells[1] - 1)]
    sizes = [int(np.prod(s)) for s in shapes]
    ncells = g.cell_count
    hx, hy = g.h

    def lap_component(axis):
        sh = shapes[axis]
        # own axis: Dirichlet at the end nodes; transverse: wall half a cell out
        def lap1d(sz, h, half):
            main = np.full(sz, -2.0)
            if half:
                main[0] = -3.0
                main[-1] = -3.0
            return sp.diags(
                [np.ones(sz - 1), main, np.ones(sz - 1)], [-1, 0, 1]
            ) / h**2

        lx = lap1d(sh[0], hx, half=(axis != 0))
        ly = lap1d(sh[1], hy, half=(axis != 1))
        return sp.kron(lx, sp.eye(sh[1])) + sp.kron(sp.eye(sh[0]), ly)

    # discrete gradient: cells -> interior faces
    def grad_matrix(axis):
        rows, cols, data = [], [], []
        idx_cells = np.arange(ncells).reshape(g.cells)
        sh = shapes[axis]
        idx_faces = np.arange(sizes[axis]).reshape(sh)
        h = g.h[axis]
        if axis == 0:
            for i in range(sh[0]):
                for j in range(sh[1]):
                    rows += [idx_faces[i, j], idx_faces[i, j]]
                    cols += [idx_cells[i + 1, j], idx_cells[i, j]]
                    data += [1.0 / h, -1.0 / h]
        else:
            for i in range(sh[0]):
                for j in range(sh[1]):
                    rows += [idx_faces[i, j], idx_faces[i, j]]
                    cols += [idx_cells[i, j + 1], idx_cells[i, j]]
                    data += [1.0 / h, -1.0 / h]
        return sp.coo_matrix((data, (rows, cols)), shape=(sizes[axis], ncells))

    A0 = -lap_component(0)
    A1 = -lap_component(1)
    G0 = grad_matrix(0)
    G1 = grad_matrix(1)
    D0 = -G0.T * (1.0)  # divergence is the negative transpose on this layout
    D1 = -G1.T * (1.0)
    z = sp.coo_matrix((ncells, ncells))
    K = sp.bmat(
        [
            [A0, None, G0],
            [None, A1, G1],
            [D0, D1, z],
        ],
        format="csr",
    ).tolil()
    # pin the pressure gauge
    K[sizes[0] + sizes[1], :] = 0.0
    K[sizes[0] + sizes[1], sizes[0] + sizes[1]] = 1.0
    rhs = np.concatenate([force_x.ravel(), force_y.ravel(), np.zeros(ncells)])
    rhs[sizes[0] + sizes[1]] = 0.0
    sol = spla.spsolve(K.tocsc(), rhs)
    ux = sol[: sizes[0]].reshape(shapes[0])
    uy = sol[sizes[0] : sizes[0] + sizes[1]].reshape(shapes[1])
    return ux, uy


def test_stokes_marches_to_steady_oracle():
    # constant-in-time forcing: repeated steps converge to the steady
    # discrete Stokes solution from an independent saddle-point solve
    g = box(16)
    ws = StokesWorkspace(g)
    n = ScalarField.from_function(
        g, lambda c, t: 1.0 + 0.5 * np.cos(np.pi * c[0]) * np.cos(np.pi * c[1])
    )
    coeffs = coeffs_with_force("sin(pi*y)", "0.5*sin(pi*x)")
    u = VectorField.zeros(g)
    dt = 0.25
    for _ in range(220):
        u, p = stokes_step(u, n, coeffs, dt, 0.0, ws)
    # independent oracle forcing on interior faces
    from chemostokes.grid import face_average

    fx = (face_average(n, 0) * coeffs.grad_phi[0](g.face_coords(0), 0.0))[1:-1, :]
    fy = (face_average(n, 1) * coeffs.grad_phi[1](g.face_coords(1), 0.0))[:, 1:-1]
    ux, uy = _steady_stokes_oracle(g, fx, fy)
    err = max(
        np.abs(u.components[0][1:-1, :] - ux).max(),
        np.abs(u.components[1][:, 1:-1] - uy).max(),
    )
    assert err <= 1e-8 * max(1.0, u.max_abs())
    # steady residual of -Lap u + grad p = f in the discrete operators
    gp = gradient(p)
    from chemostokes.linsolve import assemble_velocity_helmholtz

    for a, f_int in ((0, fx), (1, fy)):
        A, shape = assemble_velocity_helmholtz(g, a, 1.0)  # I - Lap
        interior = [slice(None)] * 2
        interior[a] = slice(1, -1)
        ua = u.components[a][tuple(interior)].ravel()
        lap_u = ua - A @ ua  # Lap*u on interior faces
        res = -lap_u + gp.components[a][tuple(interior)].ravel() - f_int.ravel()
        assert np.abs(res).max() <= 1e-8


def test_3d_projection_smoke():
    g = Grid((1.0, 1.0, 1.0), (8, 8, 8))
    ws = StokesWorkspace(g)  # CG route in 3D
    v = zero_normal_random(g, seed=5)
    out, _ = leray_project(v, ws)
    assert np.abs(divergence(out).values).max() <= 1e-10 * max(1.0, v.max_abs())
