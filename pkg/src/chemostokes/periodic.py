"""Time-periodic solutions as fixed points of the Poincare map.

The map advances a state by one forcing period; periodic solutions are its
fixed points. The solver is damped Picard iteration with optional Anderson
acceleration over the trailing residuals. Non-convergence is a report
outcome, not an error: existence of a periodic solution does not make the
map a contraction, and the report says what actually happened.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFinite
from .grid import ScalarField, State, VectorField
from .integrator import StepConfig, simulate_period
from .problem import PeriodicProblem
from .stokes import StokesWorkspace


@dataclass
class FixedPointConfig:
    max_iters: int = 50
    tol_rel: float = 1e-8
    damping: float = 1.0
    anderson_depth: int = 2

    def __post_init__(self):
        if self.tol_rel <= 0:
            raise ValueError("tol_rel must be positive")
        if not (0.0 < self.damping <= 1.0):
            raise ValueError("damping must lie in (0, 1]")
        if not (0 <= self.anderson_depth <= 5):
            raise ValueError("anderson_depth must lie in 0..5")


@dataclass
class FixedPointReport:
    converged: bool
    iterations: int
    residual_history: list
    final_state: State
    wall_time: float

    def write_csv(self, path):
        with open(path, "w") as fh:
            fh.write("iteration,residual\n")
            for i, r in enumerate(self.residual_history):
                fh.write(f"{i},{r:.17g}\n")


def state_to_vector(state: State):
    parts = [state.n.values.ravel(), state.c_tilde.values.ravel()]
    parts.extend(c.ravel() for c in state.u.components)
    return np.concatenate(parts)


def vector_to_state(vec, grid, t=0.0):
    ncells = grid.cell_count
    n = vec[:ncells].reshape(grid.cells)
    c = vec[ncells : 2 * ncells].reshape(grid.cells)
    comps, offset = [], 2 * ncells
    for a in range(grid.dim):
        size = int(np.prod(grid.face_shape(a)))
        comps.append(vec[offset : offset + size].reshape(grid.face_shape(a)))
        offset += size
    return State(ScalarField(grid, n), ScalarField(grid, c), VectorField(grid, comps), t)


def _field_slices(grid):
    ncells = grid.cell_count
    slices = [slice(0, ncells), slice(ncells, 2 * ncells)]
    offset = 2 * ncells
    for a in range(grid.dim):
        size = int(np.prod(grid.face_shape(a)))
        slices.append(slice(offset, offset + size))
        offset += size
    return slices


def residual_norm(diff_vec, x_vec, grid):
    """Stacked relative L2 over (n, c_tilde, u), each field normalized by
    max(its own L2 magnitude, 1)."""
    w = math.sqrt(grid.cell_volume)
    total = 0.0
    for sl in _field_slices(grid):
        dn = float(np.linalg.norm(diff_vec[sl])) * w
        xn = float(np.linalg.norm(x_vec[sl])) * w
        total += (dn / max(xn, 1.0)) ** 2
    return math.sqrt(total)


def poincare_map(
    state: State, problem: PeriodicProblem, cfg: StepConfig, hooks=(), workspace=None
):
    """One period of flow with the clock reset modulo T."""
    period = problem.period
    ratio = state.t / period
    if abs(ratio - round(ratio)) > 1e-9:
        raise ValueError(f"poincare_map: state.t={state.t} is not a multiple of T")
    out = simulate_period(state, problem, cfg, hooks, workspace)
    return State(out.n, out.c_tilde, out.u, 0.0)


def find_periodic(
    problem: PeriodicProblem,
    init: State,
    fp_cfg: FixedPointConfig,
    step_cfg: StepConfig,
    hooks=(),
    verbose=False,
) -> FixedPointReport:
    """Damped Picard + Anderson iteration on x -> P(x).

    With damping=1 and anderson_depth=0 this is the naive Picard iteration.
    The reported final state is the iterate whose residual closed the loop,
    so ||P(x*) - x*|| / max(||x*||, 1) equals the last residual entry.
    """
    grid = problem.grid
    if init.grid != grid:
        raise ValueError("initial state is not on the problem grid")
    workspace = StokesWorkspace(grid, method=step_cfg.method, rtol=step_cfg.rtol)
    start = time.perf_counter()
    theta = fp_cfg.damping
    depth = fp_cfg.anderson_depth
    x = state_to_vector(State(init.n, init.c_tilde, init.u, 0.0))
    history = []
    xs, gs = [], []
    converged = False
    for it in range(fp_cfg.max_iters):
        try:
            px_state = poincare_map(
                vector_to_state(x, grid), problem, step_cfg, hooks, workspace
            )
        except NonFinite as exc:
            raise NonFinite(f"Poincare iteration {it}: {exc}") from exc
        px = state_to_vector(px_state)
        g = px - x
        res = residual_norm(g, x, grid)
        history.append(res)
        if verbose:
            print(f"  poincare iter {it}: residual {res:.3e}")
        if res <= fp_cfg.tol_rel:
            converged = True
            break
        xs.append(x.copy())
        gs.append(g.copy())
        if len(xs) > depth + 1:
            xs.pop(0)
            gs.pop(0)
        if depth > 0 and len(gs) >= 2:
            dG = np.stack([gs[k + 1] - gs[k] for k in range(len(gs) - 1)], axis=1)
            dX = np.stack([xs[k + 1] - xs[k] for k in range(len(xs) - 1)], axis=1)
            gamma, *_ = np.linalg.lstsq(dG, g, rcond=None)
            x = x + theta * g - (dX + theta * dG) @ gamma
        else:
            x = x + theta * g
    wall = time.perf_counter() - start
    final = vector_to_state(x, grid)
    return FixedPointReport(converged, len(history), history, final, wall)
