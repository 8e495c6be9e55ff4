"""The full periodic problem bundle and default initial data."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .coeffs import Coefficients, RobinData
from .diffusion import Regularization
from .grid import Grid, ScalarField, State, VectorField


@dataclass
class Forcing:
    """Optional manufactured forcings, one callable (coords, t) per equation
    (u gets one callable per axis). Used by the MMS harness."""

    n: object = None
    c: object = None
    u: tuple = None


@dataclass
class PeriodicProblem:
    """Grid, physical coefficients, boundary homogenizers, and
    regularization knobs of one run."""

    grid: Grid
    coeffs: Coefficients
    homog: object
    reg: Regularization = field(default_factory=Regularization)
    robin: RobinData = None
    forcing: Forcing = None

    @property
    def period(self):
        return self.coeffs.period

    def validate(self):
        self.coeffs.validate(self.grid)
        self.reg.validate(self.coeffs.m)
        if self.robin is not None:
            self.robin.validate(self.grid)

    def sup_g2(self):
        """sup of the boundary oxygen target a2/a1 over one period; falls
        back to the homogenizer g2 field when no Robin data is attached."""
        if self.robin is not None:
            return self.robin.sup_g2(self.grid)
        sup = 0.0
        for t in np.linspace(0.0, self.period, 16, endpoint=False):
            sup = max(sup, float(self.homog.g2_cells(t).max()))
        return sup


def default_initial_state(problem: PeriodicProblem) -> State:
    """n = spatial mean of a(x, 0) clipped at 0, c_tilde = 0, u = 0.

    c_tilde = 0 means the physical oxygen starts at the Robin balance g2.
    """
    grid = problem.grid
    a0 = problem.coeffs.a(grid.cell_coords(), 0.0)
    n0 = max(float(np.mean(a0)), 0.0)
    return State(
        ScalarField.full(grid, n0),
        ScalarField.zeros(grid),
        VectorField.zeros(grid),
        0.0,
    )
