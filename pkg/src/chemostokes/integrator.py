"""Coupled first-order IMEX step for the transformed system and integration
across forcing periods.

Operator order inside a step is fixed as u -> c_tilde -> n so the cell
density sees the freshest oxygen gradient. Stiff diffusion is implicit;
transport, drift, and reactions are explicit with CFL/reaction substepping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .diffusion import Regularization, implicit_diffuse_c, implicit_diffuse_n
from .errors import CflViolation, NonFinite
from .grid import ScalarField, State, VectorField, broadcast_cells, divergence
from .linsolve import DEFAULT_RTOL, default_method
from .problem import PeriodicProblem
from .stokes import StokesWorkspace, stokes_step
from .transport import advect_upwind, cfl_number, chemo_drift, reactions_n, rhs_c

LOGISTIC_GUARD = 0.5


@dataclass
class StepConfig:
    """Base step, CFL target, substep cap, and scheme switches."""

    dt: float
    cfl_target: float = 0.5
    max_substeps: int = 64
    regularization: Regularization = field(default_factory=Regularization)
    clip_negative: bool = None  # None: on exactly when penalties are off
    c_scheme: str = "centered"
    method: str = None  # linear solver route; None picks per dimension
    rtol: float = DEFAULT_RTOL

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if not (0.0 < self.cfl_target <= 1.0):
            raise ValueError("cfl_target must lie in (0, 1]")
        if self.clip_negative is None:
            self.clip_negative = not self.regularization.penalties_on

    def steps_per_period(self, period):
        """Round dt down so the period is an integer multiple of it."""
        return max(1, math.ceil(period / self.dt - 1e-12))


@dataclass
class StepRecord:
    """Per-step bookkeeping consumed by the diagnostics ledger."""

    t_start: float
    dt: float
    substeps: int = 0
    chemo_boundary_mass: float = 0.0  # time-integrated drift-flux mass change
    advection_mass: float = 0.0  # u-transport mass change (round-off size)
    reaction_mass: float = 0.0  # time-integrated reaction + forcing mass
    clipped_mass: float = 0.0  # mass added by clipping at 0
    cfl: float = 0.0
    max_u: float = 0.0
    max_drift: float = 0.0
    div_u_inf: float = 0.0
    pressure: ScalarField = None


def _allowed_dt(state, problem, cfg, drift, t):
    """Largest stable explicit substep at the current state."""
    rate = 0.0
    for a in range(state.grid.dim):
        rate += float(np.abs(state.u.components[a]).max()) / state.grid.h[a]
        rate += float(np.abs(drift.components[a]).max()) / state.grid.h[a]
    dt_cfl = cfg.cfl_target / rate if rate > 0 else math.inf

    coeffs = problem.coeffs
    a_max = float(np.abs(coeffs.a(state.grid.cell_coords(), t)).max())
    n_max = float(np.abs(state.n.values).max())
    react_rate = coeffs.mu * (n_max + a_max)
    if cfg.regularization.penalties_on:
        react_rate += 2.0 * cfg.regularization.penalty_a
        if cfg.regularization.eps > 0:
            react_rate += cfg.regularization.eps * n_max**cfg.regularization.s
    dt_react = LOGISTIC_GUARD / react_rate if react_rate > 0 else math.inf
    return min(dt_cfl, dt_react)


def step(state: State, problem: PeriodicProblem, cfg: StepConfig, workspace=None):
    """Advance the coupled system by cfg.dt (with internal substepping).

    Returns (new_state, StepRecord).
    """
    if workspace is None:
        workspace = StokesWorkspace(state.grid, method=cfg.method, rtol=cfg.rtol)
    grid = state.grid
    vol = grid.cell_volume
    reg = cfg.regularization
    coeffs = problem.coeffs
    forcing = problem.forcing
    rec = StepRecord(t_start=state.t, dt=cfg.dt)

    n, c_tilde, u = state.n, state.c_tilde, state.u
    t = state.t
    remaining = cfg.dt
    while remaining > 1e-14 * cfg.dt:
        drift = chemo_drift(c_tilde, problem.homog, coeffs.chi, t)
        dt_sub = min(remaining, _allowed_dt(State(n, c_tilde, u, t), problem, cfg, drift, t))
        rec.substeps += 1
        if rec.substeps > cfg.max_substeps:
            raise CflViolation(
                f"substep cap {cfg.max_substeps} exceeded at t={t:.6g} "
                f"(dt_sub={dt_sub:.3e})"
            )
        # (1) Stokes step with body force n*grad(phi)
        extra = forcing.u if (forcing is not None and forcing.u is not None) else None
        u, pressure = stokes_step(u, n, coeffs, dt_sub, t, workspace, extra_force=extra)
        # (2) oxygen: explicit advection + reaction brackets, implicit diffusion
        rc = rhs_c(c_tilde, n, u, problem.homog, t, scheme=cfg.c_scheme,
                   use_n_plus=reg.penalties_on)
        c_star = c_tilde.values + dt_sub * rc.values
        if forcing is not None and forcing.c is not None:
            c_star = c_star + dt_sub * broadcast_cells(
                grid, forcing.c(grid.cell_coords(), t)
            )
        c_tilde = implicit_diffuse_c(
            ScalarField(grid, c_star), dt_sub, method=cfg.method, rtol=cfg.rtol
        )
        # (3) cell density: upwind transport, drift, reactions, implicit PME
        drift = chemo_drift(c_tilde, problem.homog, coeffs.chi, t)
        inc_u = advect_upwind(n, u, dt_sub)
        n_for_drift = (
            ScalarField(grid, np.maximum(n.values, 0.0)) if reg.penalties_on else n
        )
        inc_drift = advect_upwind(n_for_drift, drift, dt_sub)
        react = reactions_n(n, coeffs, reg, t)
        n_star = n.values + dt_sub * (inc_u.values + inc_drift.values + react.values)
        react_mass = react.values.sum() * vol
        if forcing is not None and forcing.n is not None:
            fvals = broadcast_cells(grid, forcing.n(grid.cell_coords(), t))
            n_star = n_star + dt_sub * fvals
            react_mass += float(fvals.sum()) * vol
        n = implicit_diffuse_n(
            ScalarField(grid, n_star), dt_sub, coeffs.m, eps=reg.eps,
            delta=reg.delta, method=cfg.method, rtol=cfg.rtol,
        )
        # (4) optional clip at 0 with the clipped mass logged
        if cfg.clip_negative:
            clipped = np.maximum(n.values, 0.0)
            rec.clipped_mass += float((clipped - n.values).sum()) * vol
            n = ScalarField(grid, clipped)

        rec.chemo_boundary_mass += dt_sub * float(inc_drift.values.sum()) * vol
        rec.advection_mass += dt_sub * float(inc_u.values.sum()) * vol
        rec.reaction_mass += dt_sub * react_mass
        rec.cfl = max(rec.cfl, cfl_number(u, dt_sub) + cfl_number(drift, dt_sub))
        rec.max_u = max(rec.max_u, u.max_abs())
        rec.max_drift = max(rec.max_drift, drift.max_abs())
        rec.div_u_inf = max(
            rec.div_u_inf, float(np.abs(divergence(u).values).max())
        )
        rec.pressure = pressure
        t += dt_sub
        remaining -= dt_sub

    new_state = State(n, c_tilde, u, state.t + cfg.dt)
    _check_finite(new_state)
    return new_state, rec


def _check_finite(state: State):
    # field constructors validate on creation; this guards mutated arrays
    for label, arr in (("n", state.n.values), ("c_tilde", state.c_tilde.values)):
        if not np.isfinite(arr).all():
            raise NonFinite(f"{label} became non-finite at t={state.t:.6g}")
    for a, comp in enumerate(state.u.components):
        if not np.isfinite(comp).all():
            raise NonFinite(f"u[{a}] became non-finite at t={state.t:.6g}")


def simulate_period(
    state: State, problem: PeriodicProblem, cfg: StepConfig, hooks=(), workspace=None
):
    """Advance the state by exactly one forcing period T (the Poincare map
    evaluated once). Hooks receive (state_before, state_after, record)."""
    if workspace is None:
        workspace = StokesWorkspace(state.grid, method=cfg.method, rtol=cfg.rtol)
    period = problem.period
    n_steps = cfg.steps_per_period(period)
    dt = period / n_steps
    step_cfg = StepConfig(
        dt=dt,
        cfl_target=cfg.cfl_target,
        max_substeps=cfg.max_substeps,
        regularization=cfg.regularization,
        clip_negative=cfg.clip_negative,
        c_scheme=cfg.c_scheme,
        method=cfg.method,
        rtol=cfg.rtol,
    )
    t0 = state.t
    current = state
    for _ in range(n_steps):
        before = current
        current, rec = step(current, problem, step_cfg, workspace)
        for hook in hooks:
            hook(before, current, rec)
    current = State(current.n, current.c_tilde, current.u, t0 + period)
    return current


def simulate(
    state: State,
    problem: PeriodicProblem,
    cfg: StepConfig,
    periods=1,
    hooks=(),
    workspace=None,
):
    """Run an integer number of forcing periods."""
    if workspace is None:
        workspace = StokesWorkspace(state.grid, method=cfg.method, rtol=cfg.rtol)
    current = state
    for _ in range(int(periods)):
        current = simulate_period(current, problem, cfg, hooks, workspace)
    return current
