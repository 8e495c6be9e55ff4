"""Run configuration: TOML sections with strict key/range validation.

Unknown sections or keys are errors. Coefficient values are quoted strings
in the arithmetic expression grammar (see expressions module). Parsing,
serializing, and re-parsing a config is the identity on the normalized
data, which backs the reproducibility contract of the CLI.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .coeffs import (
    Coefficients,
    ExpressionHomogenizers,
    RobinData,
    build_homogenizers,
    to_homogeneous,
)
from .diffusion import Regularization
from .errors import ConfigError
from .expressions import SpaceTimeFunction
from .grid import Grid, ScalarField, State, VectorField
from .integrator import StepConfig
from .periodic import FixedPointConfig
from .problem import PeriodicProblem


class _Req:
    pass


REQUIRED = _Req()

# section -> key -> (type tag, default)
SCHEMA = {
    "grid": {"extents": ("list_float", REQUIRED), "cells": ("list_int", REQUIRED)},
    "physics": {
        "m": ("float", REQUIRED),
        "chi": ("float", REQUIRED),
        "mu": ("float", REQUIRED),
        "period": ("float", REQUIRED),
        "a": ("str", REQUIRED),
        "g": ("str", REQUIRED),
        "grad_phi": ("list_str", REQUIRED),
    },
    "robin": {"a1": ("str", None), "a2": ("str", None)},
    "homogenizers": {"g1": ("str", None), "g2": ("str", None)},
    "regularization": {
        "eps": ("float", 0.0),
        "delta": ("float", 0.0),
        "s": ("float", 0.0),
        "penalty_a": ("float", 0.0),
        "penalties_on": ("bool", False),
        "clip_negative": ("bool", None),
    },
    "initial": {
        "n": ("str", REQUIRED),
        "c": ("str", REQUIRED),
        "u": ("list_str", None),
        "noise": ("float", 0.0),
    },
    "integrator": {
        "dt": ("float", REQUIRED),
        "cfl_target": ("float", 0.5),
        "max_substeps": ("int", 64),
        "c_scheme": ("str", "centered"),
    },
    "fixedpoint": {
        "max_iters": ("int", 50),
        "tol_rel": ("float", 1e-8),
        "damping": ("float", 1.0),
        "anderson_depth": ("int", 2),
    },
    "output": {"dir": ("str", "out"), "snapshot_stride": ("int", 0)},
    "run": {
        "periods": ("int", 3),
        "deterministic": ("bool", True),
        "seed": ("int", 0),
    },
}

_TYPE_CHECKS = {
    "float": lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
    "int": lambda v: isinstance(v, int) and not isinstance(v, bool),
    "bool": lambda v: isinstance(v, bool),
    "str": lambda v: isinstance(v, str),
    "list_float": lambda v: isinstance(v, list)
    and all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v),
    "list_int": lambda v: isinstance(v, list)
    and all(isinstance(x, int) and not isinstance(x, bool) for x in v),
    "list_str": lambda v: isinstance(v, list) and all(isinstance(x, str) for x in v),
}


@dataclass
class RunConfig:
    data: dict

    def __getitem__(self, section):
        return self.data[section]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and self.data == other.data


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML syntax error: {exc}") from exc
    data = {}
    for section, content in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(content, dict):
            raise ConfigError(f"section [{section}] must be a table")
        data[section] = {}
        for key, value in content.items():
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            tag, _ = SCHEMA[section][key]
            if not _TYPE_CHECKS[tag](value):
                raise ConfigError(
                    f"[{section}].{key} must have type {tag}, got {value!r}"
                )
            if tag == "float":
                value = float(value)
            elif tag == "list_float":
                value = [float(x) for x in value]
            data[section][key] = value
    for section, keys in SCHEMA.items():
        data.setdefault(section, {})
        for key, (tag, default) in keys.items():
            if key not in data[section]:
                if default is REQUIRED:
                    raise ConfigError(f"missing required key [{section}].{key}")
                if default is not None:
                    data[section][key] = default
    _validate_ranges(data)
    return RunConfig(data)


def _validate_ranges(data):
    cells = data["grid"]["cells"]
    extents = data["grid"]["extents"]
    if len(cells) not in (2, 3) or len(extents) != len(cells):
        raise ConfigError("grid extents and cells must both have length 2 or 3")
    if any(N < 4 for N in cells):
        raise ConfigError("grid needs at least 4 cells per axis")
    if any(L <= 0 for L in extents):
        raise ConfigError("grid extents must be positive")
    phys = data["physics"]
    if phys["m"] <= 1.0:
        raise ConfigError('diffusion exponent violates the hypothesis "m > 1"')
    if phys["chi"] < 0 or phys["mu"] < 0:
        raise ConfigError("chi and mu must be >= 0")
    if phys["period"] <= 0:
        raise ConfigError("period must be positive")
    if len(phys["grad_phi"]) != len(cells):
        raise ConfigError("grad_phi needs one component per axis")
    has_robin = bool(data.get("robin"))
    has_homog = bool(data.get("homogenizers"))
    if has_robin == has_homog:
        raise ConfigError("exactly one of [robin] or [homogenizers] is required")
    if has_robin and (data["robin"].get("a1") is None or data["robin"].get("a2") is None):
        raise ConfigError("[robin] needs both a1 and a2")
    if has_homog and (
        data["homogenizers"].get("g1") is None or data["homogenizers"].get("g2") is None
    ):
        raise ConfigError("[homogenizers] needs both g1 and g2")
    reg = data["regularization"]
    if reg["eps"] < 0 or reg["delta"] < 0 or reg["penalty_a"] < 0:
        raise ConfigError("regularization knobs must be >= 0")
    integ = data["integrator"]
    if integ["dt"] <= 0:
        raise ConfigError("dt must be positive")
    if not (0 < integ["cfl_target"] <= 1):
        raise ConfigError("cfl_target must lie in (0, 1]")
    if integ["c_scheme"] not in ("centered", "upwind"):
        raise ConfigError("c_scheme must be 'centered' or 'upwind'")
    fp = data["fixedpoint"]
    if fp["tol_rel"] <= 0:
        raise ConfigError("tol_rel must be positive")
    if not (0 < fp["damping"] <= 1):
        raise ConfigError("damping must lie in (0, 1]")
    if not (0 <= fp["anderson_depth"] <= 5):
        raise ConfigError("anderson_depth must lie in 0..5")
    run = data["run"]
    if run["periods"] < 1:
        raise ConfigError("periods must be >= 1")
    if data["output"]["snapshot_stride"] < 0:
        raise ConfigError("snapshot_stride must be >= 0")
    if data["initial"]["noise"] < 0:
        raise ConfigError("initial noise amplitude must be >= 0")


def _toml_scalar(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        text = repr(value)
        return text if any(c in text for c in ".eE") else text + ".0"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise ConfigError(f"cannot serialize {value!r}")


def serialize_config(cfg: RunConfig) -> str:
    lines = []
    for section in SCHEMA:
        content = cfg.data.get(section)
        if not content:
            continue
        lines.append(f"[{section}]")
        for key in SCHEMA[section]:
            if key not in content:
                continue
            value = content[key]
            if isinstance(value, list):
                inner = ", ".join(_toml_scalar(v) for v in value)
                lines.append(f"{key} = [{inner}]")
            else:
                lines.append(f"{key} = {_toml_scalar(value)}")
        lines.append("")
    return "\n".join(lines)


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def build_problem(cfg: RunConfig):
    """Instantiate (problem, initial state, StepConfig, FixedPointConfig)
    from a validated config; hypothesis violations raise ConfigError and
    friends before any stepping."""
    data = cfg.data
    grid = Grid(tuple(data["grid"]["extents"]), tuple(data["grid"]["cells"]))
    phys = data["physics"]
    period = phys["period"]
    coeffs = Coefficients(
        a=SpaceTimeFunction(phys["a"]),
        g=SpaceTimeFunction(phys["g"]),
        grad_phi=tuple(SpaceTimeFunction(s) for s in phys["grad_phi"]),
        chi=phys["chi"],
        mu=phys["mu"],
        m=phys["m"],
        period=period,
    )
    robin = None
    if data.get("robin"):
        robin = RobinData(
            SpaceTimeFunction(data["robin"]["a1"]),
            SpaceTimeFunction(data["robin"]["a2"]),
            period,
        )
        homog = build_homogenizers(robin, grid)
    else:
        homog = ExpressionHomogenizers(
            grid, data["homogenizers"]["g1"], data["homogenizers"]["g2"], period
        )
    regd = data["regularization"]
    reg = Regularization(
        eps=regd["eps"],
        delta=regd["delta"],
        s=regd["s"],
        penalty_a=regd["penalty_a"],
        penalties_on=regd["penalties_on"],
    )
    problem = PeriodicProblem(grid=grid, coeffs=coeffs, homog=homog, reg=reg, robin=robin)
    problem.validate()

    integ = data["integrator"]
    step_cfg = StepConfig(
        dt=integ["dt"],
        cfl_target=integ["cfl_target"],
        max_substeps=integ["max_substeps"],
        regularization=reg,
        clip_negative=regd.get("clip_negative"),
        c_scheme=integ["c_scheme"],
    )
    fp = data["fixedpoint"]
    fp_cfg = FixedPointConfig(
        max_iters=fp["max_iters"],
        tol_rel=fp["tol_rel"],
        damping=fp["damping"],
        anderson_depth=fp["anderson_depth"],
    )
    init = _initial_state(cfg, grid, homog)
    return problem, init, step_cfg, fp_cfg


def _initial_state(cfg: RunConfig, grid: Grid, homog) -> State:
    data = cfg.data
    init = data["initial"]
    n_vals = SpaceTimeFunction(init["n"])(grid.cell_coords(), 0.0)
    if init["noise"] > 0:
        rng = np.random.default_rng(data["run"]["seed"])
        n_vals = n_vals + init["noise"] * rng.uniform(-1.0, 1.0, size=grid.cells)
    clip = data["regularization"].get("clip_negative")
    if clip is None:
        clip = not data["regularization"]["penalties_on"]
    if clip:
        n_vals = np.maximum(n_vals, 0.0)
    n = ScalarField(grid, n_vals)
    c_phys = ScalarField(grid, SpaceTimeFunction(init["c"])(grid.cell_coords(), 0.0))
    c_tilde = to_homogeneous(c_phys, homog, 0.0)
    if init.get("u"):
        if len(init["u"]) != grid.dim:
            raise ConfigError("initial u needs one component per axis")
        comps = []
        for a in range(grid.dim):
            vals = SpaceTimeFunction(init["u"][a])(grid.face_coords(a), 0.0)
            sl = [slice(None)] * grid.dim
            sl[a] = 0
            vals[tuple(sl)] = 0.0
            sl[a] = -1
            vals[tuple(sl)] = 0.0
            comps.append(vals)
        u = VectorField(grid, comps)
    else:
        u = VectorField.zeros(grid)
    return State(n, c_tilde, u, 0.0)
