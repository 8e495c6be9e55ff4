"""Runtime audit of every numerically checkable estimate: bounds, mass
budget with the boundary chemotaxis flux, entropy and gradient energies,
the Moser exponent ladder, and flow norms.

Verdicts test boundedness/stationarity across periods rather than specific
constants: the analytic constants are unknowable, so stationarity of the
per-period suprema is the strongest desk-scale statement available.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coeffs import from_homogeneous
from .grid import Grid, ScalarField, State, laplacian_neumann

LOG_FLOOR = 1e-14
POWER_FLOOR = 1e-14


# ---------------------------------------------------------------------------
# norm and energy kernels
def lp_norm(values, p, grid: Grid):
    return float((np.abs(values) ** p).sum() * grid.cell_volume) ** (1.0 / p)


def sup_norm(values):
    return float(np.abs(values).max())


def _face_diffs(values, grid: Grid, axis):
    lo = [slice(None)] * grid.dim
    lo[axis] = slice(None, -1)
    hi = [slice(None)] * grid.dim
    hi[axis] = slice(1, None)
    return (values[tuple(hi)] - values[tuple(lo)]) / grid.h[axis]


def grad_l2(values, grid: Grid):
    """L2 norm of the face-difference gradient (volume weighted)."""
    acc = 0.0
    for a in range(grid.dim):
        acc += float((_face_diffs(values, grid, a) ** 2).sum())
    return math.sqrt(acc * grid.cell_volume)


def w1inf_norm(values, grid: Grid):
    """max of the cell sup and the one-sided difference sup."""
    out = sup_norm(values)
    for a in range(grid.dim):
        d = _face_diffs(values, grid, a)
        if d.size:
            out = max(out, float(np.abs(d).max()))
    return out


def vector_sup(components):
    return max(float(np.abs(c).max()) for c in components)


def vector_grad_sup(components, grid: Grid):
    out = 0.0
    for comp in components:
        for a in range(grid.dim):
            h = grid.h[a]
            lo = [slice(None)] * grid.dim
            lo[a] = slice(None, -1)
            hi = [slice(None)] * grid.dim
            hi[a] = slice(1, None)
            d = (comp[tuple(hi)] - comp[tuple(lo)]) / h
            if d.size:
                out = max(out, float(np.abs(d).max()))
    return out


def entropy(n_values, grid: Grid):
    """integral of n ln(n) with the log floored at 1e-14 (x ln x -> 0)."""
    return float(
        (n_values * np.log(np.maximum(n_values, LOG_FLOOR))).sum()
        * grid.cell_volume
    )


def mobility_entropy(n_values, grid: Grid, m, eps):
    """integral of (n+eps)^(m-1) |grad sqrt(n)|^2, faces carrying the mean
    mobility of the adjacent cells."""
    npos = np.maximum(n_values, 0.0)
    mob = (npos + eps) ** (m - 1.0)
    root = np.sqrt(npos)
    acc = 0.0
    for a in range(grid.dim):
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -1)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(1, None)
        mob_f = 0.5 * (mob[tuple(lo)] + mob[tuple(hi)])
        d = (root[tuple(hi)] - root[tuple(lo)]) / grid.h[a]
        acc += float((mob_f * d * d).sum())
    return acc * grid.cell_volume


def quartic_energy(n_values, grid: Grid, m, eps):
    """integral of (n+eps)^(m-4) |grad n|^4 with the base floored so the
    degenerate limit stays finite."""
    grad_sq = np.zeros(grid.cells)
    for a in range(grid.dim):
        pad = [(0, 0)] * grid.dim
        pad[a] = (1, 1)
        npad = np.pad(n_values, pad, mode="edge")
        lo = [slice(None)] * grid.dim
        lo[a] = slice(None, -2)
        hi = [slice(None)] * grid.dim
        hi[a] = slice(2, None)
        d = (npad[tuple(hi)] - npad[tuple(lo)]) / (2.0 * grid.h[a])
        grad_sq += d * d
    base = np.maximum(np.maximum(n_values, 0.0) + eps, POWER_FLOOR)
    return float((base ** (m - 4.0) * grad_sq**2).sum() * grid.cell_volume)


def power_field(n_values, exponent):
    """n^q on the nonnegative part (monitors are defined on n >= 0)."""
    return np.maximum(n_values, 0.0) ** exponent


def moser_ladder(m, depth=8):
    """Exponent ladder r_{j+1} = (3/2) r_j starting at r_0 = 2m + 2/3."""
    r0 = 2.0 * m + 2.0 / 3.0
    return [r0 * 1.5**j for j in range(depth + 1)]


# ---------------------------------------------------------------------------
# per-step ledger
MONITOR_FAMILIES = {
    "bounds": ("n_min", "n_max", "c_min", "c_max"),
    "mass": (
        "mass",
        "budget_residual",
        "chemo_boundary_mass",
        "reaction_mass",
        "clipped_mass",
    ),
    "norms": ("ctilde_w1inf", "u_inf", "grad_u_inf", "u_w1inf"),
    "energies": (
        "entropy",
        "mobility_entropy",
        "grad_nm_l2",
        "grad_sqrtn_l2",
        "quartic",
        "nt_l2",
        "lap_nm_l2",
    ),
    "flow": ("div_u_inf", "cfl", "substeps", "dt"),
}


def mass_budget(before: ScalarField, after: ScalarField, record, dt):
    """Relative residual of the flux-form mass bookkeeping:
    change in total n minus (boundary chemotaxis flux + reactions + clipped
    mass), relative to the current total."""
    m0 = before.total()
    m1 = after.total()
    accounted = record.chemo_boundary_mass + record.reaction_mass + record.clipped_mass
    residual = (m1 - m0) - accounted
    return residual / max(abs(m1), 1e-12)


class DiagnosticsLedger:
    """Single-writer time series of every audited quantity; attach as an
    integrator hook."""

    def __init__(self, problem, moser_depth=8, stride=1):
        self.problem = problem
        self.grid = problem.grid
        self.m = problem.coeffs.m
        self.period = problem.period
        self.moser_depth = moser_depth
        self.stride = stride
        self.ladder = moser_ladder(problem.coeffs.m, moser_depth)
        self.columns = {"t": []}
        for fam in MONITOR_FAMILIES.values():
            for name in fam:
                self.columns[name] = []
        for j in range(len(self.ladder)):
            self.columns[f"lp_r{j}"] = []
        self.c0_max = None
        self.t0 = None
        self._prev_n = None
        self._prev_t = None
        self._count = 0

    def __call__(self, before: State, after: State, record):
        if self.c0_max is None:
            c0 = from_homogeneous(before.c_tilde, self.problem.homog, before.t)
            self.c0_max = float(c0.values.max())
            self.t0 = before.t
        self._count += 1
        if self._count % self.stride != 0:
            return
        grid = self.grid
        m = self.problem.coeffs.m
        eps = self.problem.reg.eps
        n = after.n.values
        col = self.columns
        col["t"].append(after.t)
        col["dt"].append(record.dt)
        col["substeps"].append(record.substeps)
        col["n_min"].append(float(n.min()))
        col["n_max"].append(float(n.max()))
        c = from_homogeneous(after.c_tilde, self.problem.homog, after.t).values
        col["c_min"].append(float(c.min()))
        col["c_max"].append(float(c.max()))
        col["mass"].append(after.n.total())
        col["budget_residual"].append(mass_budget(before.n, after.n, record, record.dt))
        col["chemo_boundary_mass"].append(record.chemo_boundary_mass)
        col["reaction_mass"].append(record.reaction_mass)
        col["clipped_mass"].append(record.clipped_mass)
        col["ctilde_w1inf"].append(w1inf_norm(after.c_tilde.values, grid))
        col["u_inf"].append(vector_sup(after.u.components))
        col["grad_u_inf"].append(vector_grad_sup(after.u.components, grid))
        col["u_w1inf"].append(max(col["u_inf"][-1], col["grad_u_inf"][-1]))
        col["entropy"].append(entropy(n, grid))
        col["mobility_entropy"].append(mobility_entropy(n, grid, m, eps))
        nm = power_field(n, m)
        col["grad_nm_l2"].append(grad_l2(nm, grid))
        col["grad_sqrtn_l2"].append(grad_l2(np.sqrt(np.maximum(n, 0.0)), grid))
        col["quartic"].append(quartic_energy(n, grid, m, eps))
        col["lap_nm_l2"].append(
            math.sqrt(
                float((laplacian_neumann(nm, grid) ** 2).sum()) * grid.cell_volume
            )
        )
        if self._prev_n is None:
            col["nt_l2"].append(0.0)
        else:
            diff = (n - self._prev_n) / (after.t - self._prev_t)
            col["nt_l2"].append(math.sqrt(float((diff**2).sum()) * grid.cell_volume))
        self._prev_n = n.copy()
        self._prev_t = after.t
        col["div_u_inf"].append(record.div_u_inf)
        col["cfl"].append(record.cfl)
        for j, r in enumerate(self.ladder):
            col[f"lp_r{j}"].append(lp_norm(np.maximum(n, 0.0), r, grid))

    def as_arrays(self):
        return {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}

    def period_index(self, times):
        rel = (np.asarray(times) - self.t0) / self.period
        return np.ceil(rel - 1e-9).astype(int) - 1

    def period_suprema(self, name):
        """Per-period supremum of one monitor column."""
        cols = self.as_arrays()
        idx = self.period_index(cols["t"])
        values = cols[name]
        out = []
        for p in range(idx.max() + 1):
            sel = values[idx == p]
            out.append(float(np.abs(sel).max()) if sel.size else 0.0)
        return np.asarray(out)


# ---------------------------------------------------------------------------
# verdicts
@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self):
        return f"CHECK {self.name}: {'PASS' if self.passed else 'FAIL'} ({self.detail})"


def maximum_principle_check(ledger, g2_sup, c0_max=None, on_orbit=False):
    """0 <= c <= max(c0, sup g2), tightened to sup g2 on a converged orbit."""
    cols = ledger.as_arrays()
    if c0_max is None:
        c0_max = ledger.c0_max if ledger.c0_max is not None else g2_sup
    tau = 1e-8 * max(1.0, g2_sup)
    ceiling = g2_sup if on_orbit else max(c0_max, g2_sup)
    cmin = cols["c_min"].min() if cols["c_min"].size else 0.0
    cmax = cols["c_max"].max() if cols["c_max"].size else 0.0
    bad_low = cmin < -tau
    bad_high = cmax > ceiling + tau
    detail = f"min c={cmin:.3e}, max c={cmax:.6g}, ceiling={ceiling:.6g}"
    if bad_low or bad_high:
        t_at = cols["t"][int(np.argmax(cols["c_max"]))] if cols["t"].size else 0.0
        detail += f", violated near t={t_at:.6g}"
    return CheckResult("oxygen_maximum_principle", not (bad_low or bad_high), detail)


def nonnegativity_check(ledger, clip_tol=1e-8):
    """min n >= -1e-12 * max n at every step; clipped mass per period small
    against the total."""
    cols = ledger.as_arrays()
    nmax = float(cols["n_max"].max()) if cols["n_max"].size else 0.0
    floor = -1e-12 * max(nmax, 1.0)
    worst = float(cols["n_min"].min()) if cols["n_min"].size else 0.0
    ok_min = worst >= floor
    idx = ledger.period_index(cols["t"])
    ok_clip = True
    worst_clip = 0.0
    for p in range(idx.max() + 1 if idx.size else 0):
        sel = idx == p
        clipped = float(np.abs(cols["clipped_mass"][sel]).sum())
        mass = float(np.abs(cols["mass"][sel]).max()) if sel.any() else 0.0
        ratio = clipped / max(mass, 1e-12)
        worst_clip = max(worst_clip, ratio)
        if ratio > clip_tol:
            ok_clip = False
    detail = f"min n={worst:.3e} (floor {floor:.3e}), clip ratio={worst_clip:.3e}"
    return CheckResult("density_nonnegativity", ok_min and ok_clip, detail)


def mass_budget_check(ledger, tol=1e-9):
    cols = ledger.as_arrays()
    worst = float(np.abs(cols["budget_residual"]).max()) if cols["t"].size else 0.0
    return CheckResult(
        "mass_budget", worst <= tol, f"max relative residual {worst:.3e} (tol {tol:g})"
    )


def divergence_check(ledger, tol=1e-10):
    cols = ledger.as_arrays()
    if not cols["t"].size:
        return CheckResult("divergence_free", True, "no steps recorded")
    bound = tol * np.maximum(1.0, cols["u_inf"])
    worst = float((cols["div_u_inf"] / bound).max())
    return CheckResult(
        "divergence_free", worst <= 1.0, f"max div/bound ratio {worst:.3e}"
    )


def boundedness_check(ledger, monitors, growth=1e-3, floor=1e-10):
    """Per-period suprema must be stationary: S_{k+1} <= S_k (1+growth) +
    floor after the first period."""
    ok = True
    details = []
    for name in monitors:
        sup = ledger.period_suprema(name)
        if len(sup) < 3:
            details.append(f"{name}: <3 periods")
            continue
        for k in range(1, len(sup) - 1):
            if sup[k + 1] > sup[k] * (1.0 + growth) + floor:
                ok = False
                details.append(f"{name}: period {k + 1} grew {sup[k]:.6g}->{sup[k+1]:.6g}")
                break
        else:
            details.append(f"{name}: ok")
    return CheckResult("per_period_boundedness", ok, "; ".join(details))


@dataclass
class MoserTable:
    exponents: list
    suprema: list
    ratios: list
    sup_inf: float
    passed: bool

    def rows(self):
        out = []
        for j, (r, mj) in enumerate(zip(self.exponents, self.suprema)):
            ratio = self.ratios[j - 1] if j > 0 else float("nan")
            out.append((j, r, mj, ratio))
        return out


def moser_escalation(ledger, m=None, depth=None):
    """sup_t of the L^{r_j} ladder norms with the escalation ratio verdict:
    ratios bounded by 1 + 0.5/j^1.1 and the top rung within 5% of sup n."""
    if m is not None and abs(m - ledger.m) > 1e-12:
        raise ValueError("ledger was recorded with a different exponent m")
    cols = ledger.as_arrays()
    depth = depth if depth is not None else ledger.moser_depth
    exps = ledger.ladder[: depth + 1]
    sups = [float(cols[f"lp_r{j}"].max()) for j in range(depth + 1)]
    ratios = [sups[j] / max(sups[j - 1], 1e-300) for j in range(1, depth + 1)]
    sup_inf = float(cols["n_max"].max())
    ok_ratio = all(
        ratios[j - 1] <= 1.0 + 0.5 / j**1.1 + 1e-12 for j in range(1, depth + 1)
    )
    ok_top = abs(sups[-1] / max(sup_inf, 1e-300) - 1.0) <= 0.05
    return MoserTable(exps, sups, ratios, sup_inf, ok_ratio and ok_top)


def energy_monitors(snapshots, m, eps, grid: Grid):
    """Standalone energy series over a list of (t, n_values) snapshots."""
    out = {
        "t": [],
        "entropy": [],
        "mobility_entropy": [],
        "grad_nm_l2": [],
        "quartic": [],
        "nt_l2": [],
        "lap_nm_l2": [],
    }
    prev = None
    for t, n in snapshots:
        out["t"].append(t)
        out["entropy"].append(entropy(n, grid))
        out["mobility_entropy"].append(mobility_entropy(n, grid, m, eps))
        out["grad_nm_l2"].append(grad_l2(power_field(n, m), grid))
        out["quartic"].append(quartic_energy(n, grid, m, eps))
        out["lap_nm_l2"].append(
            math.sqrt(
                float((laplacian_neumann(power_field(n, m), grid) ** 2).sum())
                * grid.cell_volume
            )
        )
        if prev is None:
            out["nt_l2"].append(0.0)
        else:
            tp, np_prev = prev
            diff = (n - np_prev) / (t - tp)
            out["nt_l2"].append(math.sqrt(float((diff**2).sum()) * grid.cell_volume))
        prev = (t, n)
    return {k: np.asarray(v) for k, v in out.items()}


class LedgerView:
    """Read-only stand-in for a DiagnosticsLedger rebuilt from exported
    CSVs; implements the interface the verdict functions need."""

    def __init__(self, columns, period, m, t0=0.0, c0_max=None, moser_depth=8):
        self._columns = columns
        self.period = period
        self.m = m
        self.t0 = t0
        self.c0_max = c0_max
        self.moser_depth = moser_depth
        self.ladder = moser_ladder(m, moser_depth)

    def as_arrays(self):
        return {k: np.asarray(v, dtype=float) for k, v in self._columns.items()}

    def period_index(self, times):
        rel = (np.asarray(times) - self.t0) / self.period
        return np.ceil(rel - 1e-9).astype(int) - 1

    def period_suprema(self, name):
        cols = self.as_arrays()
        idx = self.period_index(cols["t"])
        values = cols[name]
        out = []
        for p in range(idx.max() + 1):
            sel = values[idx == p]
            out.append(float(np.abs(sel).max()) if sel.size else 0.0)
        return np.asarray(out)


# ---------------------------------------------------------------------------
# export
def write_ledger_csv(ledger, out_dir):
    """One CSV per monitor family, 17 significant digits."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    cols = ledger.as_arrays()
    families = dict(MONITOR_FAMILIES)
    families["moser"] = tuple(f"lp_r{j}" for j in range(len(ledger.ladder)))
    paths = {}
    for fam, names in families.items():
        path = os.path.join(out_dir, f"{fam}.csv")
        with open(path, "w") as fh:
            fh.write("t," + ",".join(names) + "\n")
            for i in range(len(cols["t"])):
                row = [f"{cols['t'][i]:.17g}"]
                row.extend(f"{cols[n][i]:.17g}" for n in names)
                fh.write(",".join(row) + "\n")
        paths[fam] = path
    return paths


def read_ledger_csv(out_dir):
    """Rebuild the column dict from exported family CSVs."""
    import csv
    import os

    cols = {}
    for fam in list(MONITOR_FAMILIES) + ["moser"]:
        path = os.path.join(out_dir, f"{fam}.csv")
        if not os.path.exists(path):
            continue
        with open(path) as fh:
            reader = csv.reader(fh)
            header = next(reader)
            data = list(reader)
        for j, name in enumerate(header):
            cols[name] = np.asarray([float(r[j]) for r in data])
    return cols


def render_summary(checks, extra=None):
    lines = []
    if extra:
        for key, val in extra.items():
            if isinstance(val, float):
                lines.append(f"{key}: {val:.17g}")
            else:
                lines.append(f"{key}: {val}")
    for chk in checks:
        lines.append(chk.line())
    overall = all(c.passed for c in checks)
    lines.append(f"OVERALL: {'PASS' if overall else 'FAIL'}")
    return "\n".join(lines) + "\n"
