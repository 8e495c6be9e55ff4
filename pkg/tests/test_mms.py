import numpy as np

from chemostokes.grid import Grid, broadcast_cells
from chemostokes.mms import (
    aitken_order,
    fit_order,
    make_advection_case,
    make_coupled_case,
    make_heat_case,
    run_convergence,
)


def test_fit_order_recovers_slope():
    hs = [0.1, 0.05, 0.025]
    errs = [3.0 * h**2 for h in hs]
    assert abs(fit_order(hs, errs) - 2.0) <= 1e-12


def test_aitken_extrapolation():
    assert aitken_order([0.94, 0.97]) == 1.00
    assert np.isnan(aitken_order([]))


def test_heat_case_second_order():
    res = run_convergence(make_heat_case())
    assert res.passed
    assert abs(res.order_l2 - 2.0) <= 0.2
    assert abs(res.order_inf - 2.0) <= 0.3


def test_advection_case_first_order():
    res = run_convergence(make_advection_case())
    assert res.passed
    assert abs(res.order_l2 - 1.0) <= 0.2


def test_forcing_consistency_single_step():
    # one step from exact data: the defect against the exact solution at
    # t + dt, divided by dt, shrinks under refinement (discrete residual
    # consistency of the coupled step)
    from chemostokes.integrator import StepConfig, step
    from chemostokes.mms import _case_problem, _initial_state

    case = make_coupled_case()
    defects, hs = [], []
    for N in (16, 32, 64):
        g = Grid((1.0, 1.0), (N, N))
        prob = _case_problem(case, g)
        st = _initial_state(case, g)
        dt = case.dt0 * (1.0 / N) / (1.0 / 16)
        out, _ = step(st, prob, StepConfig(dt=dt, cfl_target=0.9))
        exact = broadcast_cells(g, case.exact["n"](g.cell_coords(), dt))
        diff = out.n.values - exact
        defect = float(np.sqrt((diff**2).sum() * g.cell_volume)) / dt
        defects.append(defect)
        hs.append(1.0 / N)
    assert fit_order(hs, defects) >= 0.8


def test_order_result_csv(tmp_path):
    res = run_convergence(make_advection_case())
    path = tmp_path / "orders.csv"
    res.to_csv(path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == "n,h,err_l2,err_inf"
    assert len(lines) == 4
