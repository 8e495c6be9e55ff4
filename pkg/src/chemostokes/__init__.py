"""Structured-grid chemotaxis-Stokes simulator with porous-medium diffusion,
Robin-boundary homogenization, time-periodic orbit finding, and invariant
auditing."""

from .coeffs import (
    Coefficients,
    ExpressionHomogenizers,
    RobinData,
    build_homogenizers,
    from_homogeneous,
    to_homogeneous,
    trivial_homogenizers,
    validate_homogenizers,
)
from .diffusion import (
    Regularization,
    biharmonic_apply,
    implicit_diffuse_c,
    implicit_diffuse_n,
    pme_apply,
)
from .grid import Grid, ScalarField, State, VectorField, divergence, gradient
from .integrator import StepConfig, simulate, simulate_period, step
from .periodic import FixedPointConfig, FixedPointReport, find_periodic, poincare_map
from .problem import Forcing, PeriodicProblem, default_initial_state
from .stokes import StokesWorkspace, leray_project, stokes_step
from .transport import advect_upwind, chemo_drift, reactions_n, rhs_c

__version__ = "0.1.0"
