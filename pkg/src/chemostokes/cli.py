"""Batch front end: files in, files out.

Subcommands: simulate, find-periodic, verify, mms, report.
Exit codes: 0 all enabled verdicts pass, 1 numeric failure or failed
verdict, 2 configuration error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import diagnostics as diag
from .config import build_problem, load_config, parse_config, serialize_config
from .coeffs import validate_homogenizers
from .errors import (
    CflViolation,
    ChemoStokesError,
    ConfigError,
    NonConstantPerFace,
    NonFinite,
    NonPositiveLeavingRate,
    SolverDivergence,
)
from .integrator import simulate
from .mms import BUILTIN_CASES, run_convergence
from .periodic import find_periodic
from .problem import default_initial_state
from .vtkio import SnapshotWriter

CONFIG_ERRORS = (ConfigError, NonConstantPerFace, NonPositiveLeavingRate, ValueError)
NUMERIC_ERRORS = (NonFinite, SolverDivergence, CflViolation)

BOUNDEDNESS_MONITORS = (
    "n_max",
    "grad_nm_l2",
    "ctilde_w1inf",
    "u_w1inf",
    "entropy",
    "quartic",
    "nt_l2",
    "lap_nm_l2",
)


def _add_common(p, needs_config=True):
    p.add_argument("--config", required=needs_config, help="path to a TOML run config")
    p.add_argument("--out", default=None, help="output directory (overrides config)")
    p.add_argument(
        "--deterministic",
        action="store_true",
        help="assert single-threaded bit-reproducible mode (always on)",
    )
    p.add_argument("--periods", type=int, default=None, help="override run periods")
    p.add_argument("--dim", type=int, choices=(2, 3), default=None,
                   help="require this grid dimension")


def _prepare(args):
    cfg = load_config(args.config)
    if args.periods is not None:
        cfg.data["run"]["periods"] = args.periods
    if args.out is not None:
        cfg.data["output"]["dir"] = args.out
    if args.dim is not None and len(cfg.data["grid"]["cells"]) != args.dim:
        raise ConfigError(
            f"--dim {args.dim} does not match the {len(cfg.data['grid']['cells'])}D config"
        )
    problem, init, step_cfg, fp_cfg = build_problem(cfg)
    out_dir = cfg.data["output"]["dir"]
    os.makedirs(out_dir, exist_ok=True)
    return cfg, problem, init, step_cfg, fp_cfg, out_dir


def _write_meta(out_dir, problem, cfg, ledger):
    with open(os.path.join(out_dir, "meta.txt"), "w") as fh:
        fh.write(f"period: {problem.period:.17g}\n")
        fh.write(f"m: {problem.coeffs.m:.17g}\n")
        fh.write(f"eps: {problem.reg.eps:.17g}\n")
        fh.write(f"g2_sup: {problem.sup_g2():.17g}\n")
        fh.write(f"c0_max: {ledger.c0_max:.17g}\n")
        fh.write(f"t0: {ledger.t0:.17g}\n")
        fh.write(f"periods: {cfg.data['run']['periods']}\n")


def _read_meta(out_dir):
    meta = {}
    with open(os.path.join(out_dir, "meta.txt")) as fh:
        for line in fh:
            key, val = line.split(":", 1)
            meta[key.strip()] = float(val)
    return meta


def _standard_checks(ledger, problem, periods, full=False):
    checks = [
        diag.mass_budget_check(ledger),
        diag.nonnegativity_check(ledger),
        diag.divergence_check(ledger),
        diag.maximum_principle_check(ledger, problem.sup_g2()),
    ]
    if periods >= 3:
        checks.append(diag.boundedness_check(ledger, BOUNDEDNESS_MONITORS))
    if full:
        table = diag.moser_escalation(ledger)
        detail = ", ".join(f"r{j}={r:.4g}:M={mj:.6g}" for j, r, mj, _ in table.rows()[:3])
        checks.append(
            diag.CheckResult(
                "moser_escalation",
                table.passed,
                f"top rung M={table.suprema[-1]:.6g} vs sup n={table.sup_inf:.6g}; {detail}",
            )
        )
        if problem.robin is not None:
            rep = validate_homogenizers(problem.homog, problem.robin, problem.grid)
            checks.append(
                diag.CheckResult(
                    "homogenizer_conditions", rep.passed, f"worst violation {rep.worst():.3e}"
                )
            )
    return checks


def cmd_simulate(args, full_checks=False):
    cfg, problem, init, step_cfg, fp_cfg, out_dir = _prepare(args)
    periods = cfg.data["run"]["periods"]
    ledger = diag.DiagnosticsLedger(problem)
    hooks = [ledger]
    stride = cfg.data["output"]["snapshot_stride"]
    writer = SnapshotWriter(out_dir, problem.homog, stride=stride)
    hooks.append(writer)
    final = simulate(init, problem, step_cfg, periods=periods, hooks=hooks)
    writer.write(final)
    diag.write_ledger_csv(ledger, out_dir)
    _write_meta(out_dir, problem, cfg, ledger)
    checks = _standard_checks(ledger, problem, periods, full=full_checks)
    summary = diag.render_summary(
        checks,
        extra={
            "periods": periods,
            "steps": len(ledger.columns["t"]),
            "final_mass": final.n.total(),
            "final_max_n": float(final.n.values.max()),
        },
    )
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary)
    print(summary, end="")
    return 0 if all(c.passed for c in checks) else 1


def cmd_find_periodic(args):
    cfg, problem, init, step_cfg, fp_cfg, out_dir = _prepare(args)
    report = find_periodic(problem, init, fp_cfg, step_cfg)
    report.write_csv(os.path.join(out_dir, "residuals.csv"))
    writer = SnapshotWriter(out_dir, problem.homog, stride=0, prefix="periodic")
    writer.write(report.final_state)
    lines = [
        f"converged: {report.converged}",
        f"iterations: {report.iterations}",
        f"final_residual: {report.residual_history[-1]:.17g}",
        f"wall_time_s: {report.wall_time:.3f}",
    ]
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "fixedpoint.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return 0 if report.converged else 1


def cmd_verify(args):
    return cmd_simulate(args, full_checks=True)


def cmd_mms(args):
    out_dir = args.out or "out_mms"
    os.makedirs(out_dir, exist_ok=True)
    names = args.cases.split(",") if args.cases else list(BUILTIN_CASES)
    all_pass = True
    lines = []
    for name in names:
        if name not in BUILTIN_CASES:
            raise ConfigError(f"unknown MMS case {name!r}; have {list(BUILTIN_CASES)}")
        case = BUILTIN_CASES[name]()
        result = run_convergence(case)
        result.to_csv(os.path.join(out_dir, f"mms_{name}.csv"))
        lines.append(result.line())
        all_pass &= result.passed
    text = "\n".join(lines) + "\n"
    with open(os.path.join(out_dir, "mms_summary.txt"), "w") as fh:
        fh.write(text)
    print(text, end="")
    return 0 if all_pass else 1


def cmd_report(args):
    out_dir = args.out
    if out_dir is None or not os.path.isdir(out_dir):
        raise ConfigError("report needs --out pointing at an existing run directory")
    columns = diag.read_ledger_csv(out_dir)
    if "t" not in columns or not len(columns["t"]):
        raise ConfigError(f"no ledger CSVs found in {out_dir}")
    meta = _read_meta(out_dir)
    view = diag.LedgerView(
        columns,
        period=meta["period"],
        m=meta["m"],
        t0=meta.get("t0", 0.0),
        c0_max=meta.get("c0_max"),
    )
    checks = [
        diag.mass_budget_check(view),
        diag.nonnegativity_check(view),
        diag.divergence_check(view),
        diag.maximum_principle_check(view, meta["g2_sup"]),
    ]
    if meta.get("periods", 0) >= 3:
        checks.append(diag.boundedness_check(view, BOUNDEDNESS_MONITORS))
    checks.append(
        diag.CheckResult(
            "moser_escalation",
            diag.moser_escalation(view).passed,
            "recomputed from CSVs",
        )
    )
    summary = diag.render_summary(checks, extra={"source": out_dir})
    print(summary, end="")
    return 0 if all(c.passed for c in checks) else 1


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="chemostokes",
        description="chemotaxis-Stokes periodic-orbit simulator and verifier",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p_sim = sub.add_parser("simulate", help="run K periods and audit invariants")
    _add_common(p_sim)
    p_fp = sub.add_parser("find-periodic", help="Poincare fixed-point search")
    _add_common(p_fp)
    p_ver = sub.add_parser("verify", help="run and execute the full verdict suite")
    _add_common(p_ver)
    p_mms = sub.add_parser("mms", help="manufactured-solution convergence orders")
    p_mms.add_argument("--out", default=None)
    p_mms.add_argument("--cases", default=None, help="comma-separated case names")
    p_rep = sub.add_parser("report", help="re-render a summary from ledger CSVs")
    p_rep.add_argument("--out", required=True)

    args = parser.parse_args(argv)
    handlers = {
        "simulate": cmd_simulate,
        "find-periodic": cmd_find_periodic,
        "verify": cmd_verify,
        "mms": cmd_mms,
        "report": cmd_report,
    }
    try:
        return handlers[args.command](args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NUMERIC_ERRORS as exc:
        print(f"numeric failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
