"""Time-periodic coefficients, Robin boundary data, and the homogenizing
boundary pair (g1, g2) that turns the oxygen Robin condition into a
homogeneous Neumann condition.

The transform and its inverse:

    c_tilde = exp(-g1) * (c - g2),        c = exp(g1) * c_tilde + g2

are exact pointwise. The built (g1, g2) satisfy, exactly on box boundaries,

    d(g1)/d(nu) = -a1 < 0,   g2 = a2/a1 >= 0,   d(g2)/d(nu) = 0,

provided the Robin data is constant in space along each boundary face.
Arbitrary Robin data must come with user-supplied analytic (g1, g2), which
are then checked by `validate_homogenizers`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonConstantPerFace, NonPositiveLeavingRate
from .expressions import SpaceTimeFunction
from .grid import AXIS_NAMES, Grid, ScalarField

PERIODICITY_TOL = 1e-12

FACE_NAMES_2D = ("x_lo", "x_hi", "y_lo", "y_hi")
FACE_NAMES_3D = FACE_NAMES_2D + ("z_lo", "z_hi")


def face_names(dim):
    return FACE_NAMES_3D[: 2 * dim]


def _face_axis_side(name):
    axis = AXIS_NAMES.index(name.split("_")[0])
    side = 0 if name.endswith("_lo") else 1
    return axis, side


def sample_times(period, k=8):
    """k equispaced times plus one off-lattice point inside [0, period)."""
    ts = [i * period / k for i in range(k)]
    ts.append(0.5 * (np.sqrt(5.0) - 1.0) * period)
    return ts


def check_periodic(func, coords, period, label):
    """Verify f(x, t) == f(x, t + T) to 1e-12 at sample points."""
    for t in sample_times(period, 5):
        a = func(coords, t)
        b = func(coords, t + period)
        scale = max(1.0, float(np.abs(a).max())) if np.size(a) else 1.0
        err = float(np.abs(a - b).max())
        if err > PERIODICITY_TOL * scale:
            raise ConfigError(
                f"coefficient {label} is not {period}-periodic in t "
                f"(mismatch {err:.3e} at t={t:.6g})"
            )


@dataclass
class Coefficients:
    """Physical data of the periodic problem.

    a: growth capacity, g: nonnegative source, grad_phi: per-axis components
    of the gravitational force direction. All are space-time functions with
    period `period`.
    """

    a: SpaceTimeFunction
    g: SpaceTimeFunction
    grad_phi: tuple
    chi: float
    mu: float
    m: float
    period: float

    def validate(self, grid: Grid):
        if self.period <= 0:
            raise ConfigError("period T must be positive")
        if self.chi < 0:
            raise ConfigError("chemotactic sensitivity chi must be >= 0")
        if self.mu < 0:
            raise ConfigError("logistic rate mu must be >= 0")
        if self.m < 1:
            raise ConfigError("diffusion exponent m must be > 1")
        if len(self.grad_phi) != grid.dim:
            raise ConfigError(
                f"grad_phi needs {grid.dim} components, got {len(self.grad_phi)}"
            )
        coords = grid.cell_coords()
        for t in sample_times(self.period):
            gvals = self.g(coords, t)
            if float(gvals.min()) < 0:
                raise ConfigError(
                    f'coefficient g violates the hypothesis "g >= 0" '
                    f"(min {gvals.min():.6g} at t={t:.6g})"
                )
        check_periodic(self.a, coords, self.period, "a")
        check_periodic(self.g, coords, self.period, "g")
        for ax, comp in enumerate(self.grad_phi):
            check_periodic(comp, coords, self.period, f"grad_phi[{AXIS_NAMES[ax]}]")


@dataclass
class RobinData:
    """Oxygen exchange data on the boundary: leaving rate a1 > 0 and
    incoming supply a2 >= 0, both T-periodic."""

    a1: SpaceTimeFunction
    a2: SpaceTimeFunction
    period: float

    def validate(self, grid: Grid):
        for name in face_names(grid.dim):
            coords = boundary_face_coords(grid, name)
            for t in sample_times(self.period):
                a1v = self.a1(coords, t)
                if float(a1v.min()) <= 0:
                    raise NonPositiveLeavingRate(
                        f"a1 must be > 0 on the boundary; min {a1v.min():.6g} "
                        f"on face {name} at t={t:.6g}"
                    )
                a2v = self.a2(coords, t)
                if float(a2v.min()) < 0:
                    raise ConfigError(
                        f"a2 must be >= 0 on the boundary; min {a2v.min():.6g} "
                        f"on face {name} at t={t:.6g}"
                    )
            check_periodic(self.a1, coords, self.period, f"a1[{name}]")
            check_periodic(self.a2, coords, self.period, f"a2[{name}]")

    def sup_g2(self, grid: Grid, nt=32):
        """sup over boundary and one period of a2/a1."""
        sup = 0.0
        for name in face_names(grid.dim):
            coords = boundary_face_coords(grid, name)
            for t in np.linspace(0.0, self.period, nt, endpoint=False):
                ratio = self.a2(coords, t) / self.a1(coords, t)
                sup = max(sup, float(ratio.max()))
        return sup


def boundary_face_coords(grid: Grid, name):
    """Coordinates of the boundary face centers of one box face."""
    axis, side = _face_axis_side(name)
    coords = []
    for a in range(grid.dim):
        if a == axis:
            val = 0.0 if side == 0 else grid.extents[a]
            coords.append(np.asarray(val))
        else:
            coords.append(grid._bcast(grid.axis_centers(a), a, grid.cells))
    return tuple(coords)


# Cutoff profiles (C^3 polynomials; s = distance/w clipped to [0,1]).
# psi ramps from the boundary with unit slope and integrates to zero by
# distance w, so g1 vanishes identically in the interior core; omega is a
# bump with unit value and zero slope at the boundary. Third-derivative
# continuity at the cutoff keeps the transformed drift second-order
# consistent across the junction.
def _psi(s, w):
    return w * (s - 20.0 * s**4 + 45.0 * s**5 - 36.0 * s**6 + 10.0 * s**7)


def _dpsi(s):
    return 1.0 - 80.0 * s**3 + 225.0 * s**4 - 216.0 * s**5 + 70.0 * s**6


def _d2psi(s, w):
    return (-240.0 * s**2 + 900.0 * s**3 - 1080.0 * s**4 + 420.0 * s**5) / w


def _omega(s):
    return 1.0 - (35.0 * s**4 - 84.0 * s**5 + 70.0 * s**6 - 20.0 * s**7)


def _domega(s, w):
    return -140.0 * s**3 * (1.0 - s) ** 3 / w


def _d2omega(s, w):
    return -(420.0 * s**2 - 1680.0 * s**3 + 2100.0 * s**4 - 840.0 * s**5) / w**2


class CutoffHomogenizers:
    """(g1, g2) from per-face-constant Robin data via boundary cutoffs.

    g1(x,t) = sum_f a1_f(t) * psi(d_f(x)); the sign makes d(g1)/d(nu) = -a1
    with psi'(0) = 1 and d_f the inward distance to face f. g2 blends the
    per-face targets r_f = a2/a1 around their mean, so it is exact whenever
    the targets agree (and exactly r when they all equal r).
    """

    def __init__(self, grid: Grid, a1_of_t, a2_of_t, period):
        # a1_of_t / a2_of_t: dicts face name -> callable(t) -> float
        self.grid = grid
        self.period = period
        self.names = face_names(grid.dim)
        self.a1_of_t = a1_of_t
        self.a2_of_t = a2_of_t
        self._profiles = {}
        for name in self.names:
            axis, side = _face_axis_side(name)
            w = grid.extents[axis] / 4.0
            for lattice, line in (
                ("c", grid.axis_centers(axis)),
                ("f", grid.axis_faces(axis)),
            ):
                d = line if side == 0 else grid.extents[axis] - line
                sgn = 1.0 if side == 0 else -1.0
                s = np.clip(d / w, 0.0, 1.0)
                self._profiles[(name, lattice)] = {
                    "psi": _psi(s, w),
                    "dpsi": sgn * _dpsi(s),
                    "d2psi": _d2psi(s, w),
                    "omega": _omega(s),
                    "domega": sgn * _domega(s, w),
                    "d2omega": _d2omega(s, w),
                }

    # -- scalar time data -------------------------------------------------
    def _a1(self, name, t, deriv=False):
        fn = self.a1_of_t[name]
        return fn(t, deriv=deriv)

    def _r(self, name, t, deriv=False):
        fn = self.a2_of_t[name]
        return fn(t, deriv=deriv)

    def _rbar(self, t, deriv=False):
        return sum(self._r(n, t, deriv) for n in self.names) / len(self.names)

    # -- assembly ---------------------------------------------------------
    def _sum_profile(self, key, weight, shape, lattice_axis=None, axes=None):
        out = np.zeros(shape)
        for name in self.names:
            axis, _ = _face_axis_side(name)
            if axes is not None and axis not in axes:
                continue
            lattice = "f" if lattice_axis == axis else "c"
            prof = self._profiles[(name, lattice)][key]
            out += weight(name) * self.grid._bcast(prof, axis, shape)
        return out

    def g1_cells(self, t):
        return self._sum_profile("psi", lambda n: self._a1(n, t), self.grid.cells)

    def g1t_cells(self, t):
        return self._sum_profile(
            "psi", lambda n: self._a1(n, t, deriv=True), self.grid.cells
        )

    def grad_g1_cells(self, t):
        return [
            self._sum_profile(
                "dpsi", lambda n: self._a1(n, t), self.grid.cells, axes=(a,)
            )
            for a in range(self.grid.dim)
        ]

    def lap_g1_cells(self, t):
        return self._sum_profile("d2psi", lambda n: self._a1(n, t), self.grid.cells)

    def g2_cells(self, t):
        rbar = self._rbar(t)
        out = np.full(self.grid.cells, rbar)
        out += self._sum_profile(
            "omega", lambda n: self._r(n, t) - rbar, self.grid.cells
        )
        return out

    def g2t_cells(self, t):
        rbar_t = self._rbar(t, deriv=True)
        out = np.full(self.grid.cells, rbar_t)
        out += self._sum_profile(
            "omega", lambda n: self._r(n, t, deriv=True) - rbar_t, self.grid.cells
        )
        return out

    def grad_g2_cells(self, t):
        rbar = self._rbar(t)
        return [
            self._sum_profile(
                "domega", lambda n: self._r(n, t) - rbar, self.grid.cells, axes=(a,)
            )
            for a in range(self.grid.dim)
        ]

    def lap_g2_cells(self, t):
        rbar = self._rbar(t)
        return self._sum_profile(
            "d2omega", lambda n: self._r(n, t) - rbar, self.grid.cells
        )

    def g1_faces(self, axis, t):
        return self._sum_profile(
            "psi", lambda n: self._a1(n, t), self.grid.face_shape(axis), lattice_axis=axis
        )

    def dg1_faces(self, axis, t):
        return self._sum_profile(
            "dpsi",
            lambda n: self._a1(n, t),
            self.grid.face_shape(axis),
            lattice_axis=axis,
            axes=(axis,),
        )

    def dg2_faces(self, axis, t):
        rbar = self._rbar(t)
        return self._sum_profile(
            "domega",
            lambda n: self._r(n, t) - rbar,
            self.grid.face_shape(axis),
            lattice_axis=axis,
            axes=(axis,),
        )


class ExpressionHomogenizers:
    """(g1, g2) supplied analytically; all derivatives are derived
    symbolically from the expressions."""

    def __init__(self, grid: Grid, g1, g2, period=1.0):
        self.grid = grid
        self.period = period
        self.g1 = g1 if isinstance(g1, SpaceTimeFunction) else SpaceTimeFunction(g1)
        self.g2 = g2 if isinstance(g2, SpaceTimeFunction) else SpaceTimeFunction(g2)
        axes = AXIS_NAMES[: grid.dim]
        self.g1_t = self.g1.diff("t")
        self.g2_t = self.g2.diff("t")
        self.g1_grad = [self.g1.diff(v) for v in axes]
        self.g2_grad = [self.g2.diff(v) for v in axes]
        self.g1_lap = [g.diff(v) for g, v in zip(self.g1_grad, axes)]
        self.g2_lap = [g.diff(v) for g, v in zip(self.g2_grad, axes)]

    def _cells(self, fn, t):
        return fn(self.grid.cell_coords(), t)

    def g1_cells(self, t):
        return self._cells(self.g1, t)

    def g2_cells(self, t):
        return self._cells(self.g2, t)

    def g1t_cells(self, t):
        return self._cells(self.g1_t, t)

    def g2t_cells(self, t):
        return self._cells(self.g2_t, t)

    def grad_g1_cells(self, t):
        return [self._cells(g, t) for g in self.g1_grad]

    def grad_g2_cells(self, t):
        return [self._cells(g, t) for g in self.g2_grad]

    def lap_g1_cells(self, t):
        return sum(self._cells(g, t) for g in self.g1_lap)

    def lap_g2_cells(self, t):
        return sum(self._cells(g, t) for g in self.g2_lap)

    def g1_faces(self, axis, t):
        return self.g1(self.grid.face_coords(axis), t)

    def dg1_faces(self, axis, t):
        return self.g1_grad[axis](self.grid.face_coords(axis), t)

    def dg2_faces(self, axis, t):
        return self.g2_grad[axis](self.grid.face_coords(axis), t)


def trivial_homogenizers(grid: Grid, period=1.0):
    """g1 = g2 = 0: pure homogeneous Neumann oxygen data."""
    return ExpressionHomogenizers(grid, "0", "0", period)


def _scalar_time_fn(func: SpaceTimeFunction, coords):
    """Collapse a space-time expression to a function of t at a fixed point."""
    point = tuple(np.asarray(c).ravel()[0] for c in coords)
    dfunc = func.diff("t")

    def fn(t, deriv=False):
        f = dfunc if deriv else func
        return float(f(point, t))

    return fn


def build_homogenizers(robin: RobinData, grid: Grid) -> CutoffHomogenizers:
    """Closed-form (g1, g2) for Robin data constant along each box face."""
    robin.validate(grid)
    a1_of_t, a2_of_t = {}, {}
    for name in face_names(grid.dim):
        coords = boundary_face_coords(grid, name)
        for t in sample_times(robin.period):
            a1v = robin.a1(coords, t)
            a2v = robin.a2(coords, t)
            if np.ptp(a1v) > 1e-12 or np.ptp(a2v / a1v) > 1e-12:
                raise NonConstantPerFace(
                    f"Robin data varies along face {name} at t={t:.6g}; "
                    "supply analytic g1, g2 instead"
                )
        a1_of_t[name] = _scalar_time_fn(robin.a1, coords)
        ratio = SpaceTimeFunction(("div", robin.a2.ast, robin.a1.ast))
        a2_of_t[name] = _scalar_time_fn(ratio, coords)
    return CutoffHomogenizers(grid, a1_of_t, a2_of_t, robin.period)


@dataclass
class HomogenizerReport:
    passed: bool
    tolerance: float
    max_dg1_violation: float
    max_g2_violation: float
    max_dg2_violation: float

    def worst(self):
        return max(
            self.max_dg1_violation, self.max_g2_violation, self.max_dg2_violation
        )


def validate_homogenizers(homog, robin: RobinData, grid: Grid, tau_bc=1e-8):
    """Sample the three boundary conditions on all boundary faces at >= 8
    times in one period and report the worst violations."""
    v_dg1 = v_g2 = v_dg2 = 0.0
    for name in face_names(grid.dim):
        axis, side = _face_axis_side(name)
        idx = [slice(None)] * grid.dim
        idx[axis] = 0 if side == 0 else -1
        idx = tuple(idx)
        nu_sign = -1.0 if side == 0 else 1.0
        coords = boundary_face_coords(grid, name)
        for t in sample_times(robin.period, 8):
            a1v = robin.a1(coords, t)
            a2v = robin.a2(coords, t)
            dg1_dnu = nu_sign * homog.dg1_faces(axis, t)[idx]
            dg2_dnu = nu_sign * homog.dg2_faces(axis, t)[idx]
            g2b = _g2_on_face(homog, axis, t, idx)
            v_dg1 = max(v_dg1, float(np.abs(dg1_dnu + a1v).max()))
            v_g2 = max(v_g2, float(np.abs(g2b - a2v / a1v).max()))
            v_dg2 = max(v_dg2, float(np.abs(dg2_dnu).max()))
    passed = max(v_dg1, v_g2, v_dg2) <= tau_bc
    return HomogenizerReport(passed, tau_bc, v_dg1, v_g2, v_dg2)


def _g2_on_face(homog, axis, t, idx):
    if hasattr(homog, "g2_faces"):
        return homog.g2_faces(axis, t)[idx]
    if isinstance(homog, ExpressionHomogenizers):
        return homog.g2(homog.grid.face_coords(axis), t)[idx]
    # cutoff construction: evaluate g2 on the face lattice
    rbar = homog._rbar(t)
    out = np.full(homog.grid.face_shape(axis), rbar)
    out += homog._sum_profile(
        "omega", lambda n: homog._r(n, t) - rbar, homog.grid.face_shape(axis),
        lattice_axis=axis,
    )
    return out[idx]


def to_homogeneous(c: ScalarField, homog, t) -> ScalarField:
    """c_tilde = exp(-g1) * (c - g2)."""
    vals = np.exp(-homog.g1_cells(t)) * (c.values - homog.g2_cells(t))
    return ScalarField(c.grid, vals)


def from_homogeneous(c_tilde: ScalarField, homog, t) -> ScalarField:
    """c = exp(g1) * c_tilde + g2."""
    vals = np.exp(homog.g1_cells(t)) * c_tilde.values + homog.g2_cells(t)
    return ScalarField(c_tilde.grid, vals)
