"""Scenario-driven command line: run, verify, sweep, and boundary reports.

Scenarios are TOML files with the sections below.  Unknown sections or keys
are rejected so that typos fail loudly instead of silently falling back to
defaults.

    [grid]
    dim = 1
    cells = 64            # int, or one entry per axis
    h = 0.015625          # optional; defaults to 1/cells per axis
    periodic = false

    [coefficients]        # optional; defaults rho = C = eps = mu = 1 and
    rho = 1.0             # e = sigma = 0.  Entries are scalars, per-dof
    sigma = 1.0           # lists, matrices (lists of rows), or tables:
    # e = { kind = "random", scale = 0.3, seed = 11 }
    # rho = { base = 1.0, factors = [[[...], [...]]] }  # separable kernel

    [boundary]
    mode = "dirichlet"    # or "leontovich"
    # q = 0.5             # leontovich coupling: scalars, matrices, or
    # alpha = 0.1         # random = { q_scale = 0.7, alpha_scale = 0.4, seed = 5 }
    # [boundary.data.v]   # dirichlet wall data (lifted inhomogeneous run)
    # kind = "gauss"; amplitude = 1.0; center = 0.4; width = 0.1

    [time]
    nu = 1.0
    dt = 0.01
    n_steps = 100

    [source.velocity]     # one table per driven state block
    kind = "step"         # zero | step | gauss
    amplitude = 2.0
    onset = 0.3           # step turn-on; gauss uses center/width
    profile = "uniform"   # uniform | center | random (seeded)

    [output]
    dir = "out"           # artifact directory, relative to the scenario

    [run]
    allow_uncertified = false

``run`` writes a per-step CSV (time, per-field weighted norms, cumulative
space-time norm, boundary-law residual when traces are present) and a
final-state JSON dump.  ``verify`` writes a JSON report in which every
check carries its value, the tolerance it was tested against, and a pass
flag, plus dimension-specific refinement trend tables.  ``sweep`` writes
one CSV row per axis value with Richardson orders or monotonicity flags;
rows are computed in parallel when PEMLAB_WORKERS is set above 1.
``bdspace`` writes boundary-space dimensions and compression defects for
the scenario's grid.  Floats are printed with 17 significant digits, so a
rerun of the same scenario is byte-identical.

Exit codes: 0 success, 2 unreadable or invalid scenario, 3 certification
failure without the override, 4 solver breakdown.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - python < 3.11
    import tomli as tomllib

import numpy as np
import scipy.sparse as sp

from .bdspace import adjoint_identity_report, compute_boundary_space, dotted_operator
from .evosolve import solve
from .material import Coefficients, check_posdef, nonlocal_coefficient
from .piezo import (
    BoundaryData,
    LeontovichParams,
    S_of_z,
    boundary_residual,
    build_dirichlet_system,
    build_leontovich_system,
    lift_boundary_data,
    original_of_z,
    random_leontovich_params,
)
from .spatialops import GridSpec, boundary_closed_dual, build_pair, collocated_curl, scalar_em_pair_1d
from .timeweight import TimeGrid, Trajectory, causality_defect, weighted_norm

__all__ = ["ScenarioError", "load_scenario", "main"]

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_CERT = 3
EXIT_SOLVE = 4

_SOLVER_ERRORS = (ArithmeticError, RuntimeError, np.linalg.LinAlgError)


class ScenarioError(ValueError):
    """Anything wrong with the scenario file itself."""


_SECTION_KEYS = {
    "grid": {"dim", "cells", "h", "periodic"},
    "coefficients": {"rho", "C", "e", "eps", "mu", "sigma"},
    "boundary": {"mode", "q", "alpha", "random", "data"},
    "time": {"nu", "dt", "n_steps", "t0"},
    "source": None,  # per-field tables, validated against the layout later
    "output": {"dir", "steps", "state", "report", "sweep", "bdspace"},
    "run": {"allow_uncertified"},
}
_GENERATOR_KEYS = {"kind", "amplitude", "onset", "center", "width", "profile", "seed"}
_KERNEL_FIELD = {
    "rho": "velocity",
    "C": "strain",
    "eps": "efield",
    "mu": "hfield",
    "sigma": "efield",
}


def _check_keys(name: str, table: dict, allowed: set[str]) -> None:
    extra = set(table) - allowed
    if extra:
        raise ScenarioError(f"[{name}] has unknown keys {sorted(extra)}")


def _number(table: dict, section: str, key: str, default=None, positive=False):
    if key not in table:
        if default is None:
            raise ScenarioError(f"[{section}] is missing required key '{key}'")
        return default
    val = table[key]
    if isinstance(val, bool) or not isinstance(val, (int, float)):
        raise ScenarioError(f"[{section}] {key} must be a number, got {val!r}")
    if positive and not val > 0:
        raise ScenarioError(f"[{section}] {key} must be positive, got {val}")
    return float(val)


@dataclass(frozen=True)
class Scenario:
    """Parsed scenario file plus the paths its artifacts go to."""

    path: Path
    spec: dict[str, Any]

    @property
    def mode(self) -> str:
        return self.spec.get("boundary", {}).get("mode", "dirichlet")

    def out_path(self, kind: str, suffix: str) -> Path:
        out = self.spec.get("output", {})
        directory = self.path.parent / out.get("dir", ".")
        name = out.get(kind, f"{self.path.stem}_{kind}{suffix}")
        return directory / name


def load_scenario(path: str | Path) -> Scenario:
    """Read and structurally validate a scenario file."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            spec = tomllib.load(fh)
    except OSError as err:
        raise ScenarioError(f"cannot read scenario: {err}") from err
    except tomllib.TOMLDecodeError as err:
        raise ScenarioError(f"scenario does not parse: {err}") from err

    _check_keys("scenario", spec, set(_SECTION_KEYS))
    for section, allowed in _SECTION_KEYS.items():
        table = spec.get(section, {})
        if not isinstance(table, dict):
            raise ScenarioError(f"[{section}] must be a table")
        if allowed is not None:
            _check_keys(section, table, allowed)

    grid = spec.get("grid", {})
    dim = grid.get("dim")
    if dim not in (1, 2, 3):
        raise ScenarioError(f"[grid] dim must be 1, 2, or 3, got {dim!r}")
    cells = grid.get("cells")
    if isinstance(cells, int) and not isinstance(cells, bool):
        cells = [cells] * dim
    if (
        not isinstance(cells, list)
        or len(cells) != dim
        or any(isinstance(c, bool) or not isinstance(c, int) or c < 2 for c in cells)
    ):
        raise ScenarioError(f"[grid] cells must give an integer >= 2 per axis, got {grid.get('cells')!r}")
    h = grid.get("h", [1.0 / c for c in cells])
    if isinstance(h, (int, float)) and not isinstance(h, bool):
        h = [float(h)] * dim
    if not isinstance(h, list) or len(h) != dim or any(not isinstance(x, (int, float)) or not x > 0 for x in h):
        raise ScenarioError(f"[grid] h must give a positive spacing per axis, got {grid.get('h')!r}")
    spec["grid"] = {**grid, "cells": [int(c) for c in cells], "h": [float(x) for x in h]}

    time = spec.get("time", {})
    _number(time, "time", "nu", positive=True)
    _number(time, "time", "dt", positive=True)
    n_steps = time.get("n_steps")
    if isinstance(n_steps, bool) or not isinstance(n_steps, int) or n_steps < 1:
        raise ScenarioError(f"[time] n_steps must be a positive integer, got {n_steps!r}")
    _number(time, "time", "t0", default=0.0)

    mode = spec.get("boundary", {}).get("mode", "dirichlet")
    if mode not in ("dirichlet", "leontovich"):
        raise ScenarioError(f"[boundary] mode must be 'dirichlet' or 'leontovich', got {mode!r}")
    if mode == "leontovich" and "data" in spec.get("boundary", {}):
        raise ScenarioError("[boundary] data applies to dirichlet scenarios only")
    for field, table in spec.get("boundary", {}).get("data", {}).items():
        if field not in ("v", "E"):
            raise ScenarioError(f"[boundary.data] fields are 'v' and 'E', got {field!r}")
        if not isinstance(table, dict):
            raise ScenarioError(f"[boundary.data.{field}] must be a table")
        _check_keys(f"boundary.data.{field}", table, _GENERATOR_KEYS)
    for field, table in spec.get("source", {}).items():
        if not isinstance(table, dict):
            raise ScenarioError(f"[source.{field}] must be a table")
        _check_keys(f"source.{field}", table, _GENERATOR_KEYS)
    return Scenario(path=path, spec=spec)


def _grid(scn: Scenario) -> GridSpec:
    g = scn.spec["grid"]
    return GridSpec(
        dim=g["dim"],
        cells=tuple(g["cells"]),
        h=tuple(g["h"]),
        periodic=bool(g.get("periodic", False)),
    )


def _time_grid(scn: Scenario) -> TimeGrid:
    t = scn.spec["time"]
    return TimeGrid(nu=float(t["nu"]), dt=float(t["dt"]), n_steps=int(t["n_steps"]), t0=float(t.get("t0", 0.0)))


def _coefficient_entry(name: str, raw, probe_layout) -> Any:
    """Resolve one scenario coefficient to a value Coefficients accepts."""
    if isinstance(raw, (int, float)) and not isinstance(raw, bool):
        return float(raw)
    if isinstance(raw, list):
        arr = np.asarray(raw, dtype=float)
        if arr.ndim not in (1, 2):
            raise ScenarioError(f"[coefficients] {name} must be a vector or a matrix")
        return arr
    if isinstance(raw, dict):
        if raw.get("kind") == "random":
            if name != "e":
                raise ScenarioError("[coefficients] random entries are supported for 'e' only")
            _check_keys("coefficients.e", raw, {"kind", "scale", "seed"})
            nt = probe_layout.size_of("strain")
            ne = probe_layout.size_of("efield")
            rng = np.random.default_rng(int(raw.get("seed", 0)))
            scale = _number(raw, "coefficients.e", "scale", default=1.0)
            return scale * rng.standard_normal((nt, ne)) / np.sqrt(ne)
        if "base" in raw or "factors" in raw:
            if name not in _KERNEL_FIELD:
                raise ScenarioError(f"[coefficients] {name} does not take a kernel spec")
            _check_keys(f"coefficients.{name}", raw, {"base", "factors"})
            block = probe_layout.block(_KERNEL_FIELD[name])
            weights = probe_layout.weights[block]
            n = block.stop - block.start
            base = np.full(n, float(raw.get("base", 1.0)))
            factors = [
                (np.asarray(a, dtype=float), np.asarray(b, dtype=float))
                for a, b in raw.get("factors", [])
            ]
            return nonlocal_coefficient(base, weights, factors or None).matrix
        raise ScenarioError(f"[coefficients] {name} table needs kind='random' or base/factors")
    raise ScenarioError(f"[coefficients] {name} has unsupported value {raw!r}")


def _leontovich_params(scn: Scenario, probe_layout) -> LeontovichParams:
    bnd = scn.spec.get("boundary", {})
    ng = probe_layout.size_of("strain_bnd")
    ne = probe_layout.size_of("efield_bnd")
    if "random" in bnd:
        if "q" in bnd or "alpha" in bnd:
            raise ScenarioError("[boundary] give either random or explicit q/alpha, not both")
        table = bnd["random"]
        _check_keys("boundary.random", table, {"q_scale", "alpha_scale", "seed"})
        rng = np.random.default_rng(int(table.get("seed", 0)))
        return random_leontovich_params(
            ng,
            ne,
            rng,
            q_scale=_number(table, "boundary.random", "q_scale", default=1.0),
            alpha_scale=_number(table, "boundary.random", "alpha_scale", default=1.0),
        )

    def entry(key):
        raw = bnd.get(key, 0.0)
        if isinstance(raw, list):
            return np.asarray(raw, dtype=float)
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        raise ScenarioError(f"[boundary] {key} must be a scalar or a matrix")

    return LeontovichParams(Q=entry("q"), alpha=entry("alpha"))


def build_system(scn: Scenario, grid: GridSpec | None = None):
    """Assemble the scenario's certified system (probe pass, then real pass)."""
    grid = grid if grid is not None else _grid(scn)
    nu = float(scn.spec["time"]["nu"])
    nu_range = (nu, 2.0 * nu, 4.0 * nu)
    raw_coeffs = scn.spec.get("coefficients", {})
    bnd = scn.spec.get("boundary", {})
    needs_probe = any(isinstance(v, dict) for v in raw_coeffs.values()) or scn.mode == "leontovich"
    probe_layout = None
    if needs_probe:
        if scn.mode == "leontovich":
            probe_layout = build_leontovich_system(grid, Coefficients(), LeontovichParams()).layout
        else:
            probe_layout = build_dirichlet_system(grid, Coefficients()).layout
    coeffs = Coefficients(
        **{name: _coefficient_entry(name, raw, probe_layout) for name, raw in raw_coeffs.items()}
    )
    if scn.mode == "leontovich":
        params = _leontovich_params(scn, probe_layout)
        return build_leontovich_system(grid, coeffs, params, nu_range=nu_range)
    if "q" in bnd or "alpha" in bnd or "random" in bnd:
        raise ScenarioError("[boundary] q/alpha/random apply to leontovich scenarios only")
    return build_dirichlet_system(grid, coeffs, nu_range=nu_range)


def _time_profile(table: dict, section: str, times: np.ndarray) -> np.ndarray:
    kind = table.get("kind", "zero")
    amp = _number(table, section, "amplitude", default=1.0)
    if kind == "zero":
        return np.zeros_like(times)
    if kind == "step":
        onset = _number(table, section, "onset", default=0.0)
        return amp * (times >= onset).astype(float)
    if kind == "gauss":
        center = _number(table, section, "center")
        width = _number(table, section, "width", positive=True)
        return amp * np.exp(-0.5 * ((times - center) / width) ** 2)
    raise ScenarioError(f"[{section}] kind must be zero, step, or gauss, got {kind!r}")


def _spatial_profile(table: dict, section: str, size: int) -> np.ndarray:
    profile = table.get("profile", "uniform")
    if profile == "uniform":
        return np.ones(size)
    if profile == "center":
        out = np.zeros(size)
        out[size // 2] = 1.0
        return out
    if profile == "random":
        rng = np.random.default_rng(int(table.get("seed", 0)))
        return rng.standard_normal(size)
    raise ScenarioError(f"[{section}] profile must be uniform, center, or random, got {profile!r}")


def build_source(scn: Scenario, system, tg: TimeGrid) -> Trajectory:
    layout = system.layout
    vals = np.zeros((tg.n_steps, layout.size))
    for field, table in scn.spec.get("source", {}).items():
        if field not in layout.names:
            raise ScenarioError(f"[source] unknown state block {field!r}; layout has {layout.names}")
        blk = layout.block(field)
        g_t = _time_profile(table, f"source.{field}", tg.times)
        s_x = _spatial_profile(table, f"source.{field}", blk.stop - blk.start)
        vals[:, blk] = g_t[:, None] * s_x[None, :]
    return Trajectory(tg, vals, layout.weights)


def _boundary_payload(scn: Scenario, system, tg: TimeGrid) -> BoundaryData | None:
    tables = scn.spec.get("boundary", {}).get("data")
    if not tables:
        return None
    meta = system.layout.meta
    bspaces = meta.get("bspaces")
    if bspaces is None:
        pairs = meta["pairs"]
        bspaces = {
            "grad": compute_boundary_space(pairs["grad"]),
            "em": compute_boundary_space(pairs["em"]),
        }
        meta["bspaces"] = bspaces

    def coordinates(field, bs):
        table = tables.get(field)
        if table is None:
            return Trajectory(tg, np.zeros((tg.n_steps, bs.dim)))
        table = dict(table)
        amp = table.get("amplitude", 1.0)
        if isinstance(amp, list):
            # per-coordinate amplitudes scale a unit time profile
            per_coord = np.asarray(amp, dtype=float).ravel()
            table["amplitude"] = 1.0
        else:
            per_coord = np.ones(bs.dim)
        if per_coord.size != bs.dim:
            raise ScenarioError(
                f"[boundary.data.{field}] amplitude list has {per_coord.size} entries, "
                f"boundary space has {bs.dim}"
            )
        g_t = _time_profile(table, f"boundary.data.{field}", tg.times)
        return Trajectory(tg, g_t[:, None] * per_coord[None, :])

    return BoundaryData(coordinates("v", bspaces["grad"]), coordinates("E", bspaces["em"]))


@dataclass(frozen=True)
class SimResult:
    report: Any
    physical: Trajectory
    layout: Any
    residual_norms: np.ndarray | None


def simulate(scn: Scenario, system, tg: TimeGrid, *, allow_uncertified: bool = False) -> SimResult:
    """Solve the scenario and return the physically meaningful trajectory."""
    F = build_source(scn, system, tg)
    data = _boundary_payload(scn, system, tg)
    if data is not None:
        rhs, reconstruct = lift_boundary_data(system, data, F)
        report = solve(system, rhs, allow_uncertified=allow_uncertified)
        physical = reconstruct(report.trajectory)
        layout = system.layout.meta["full"]["layout"]
    else:
        report = solve(system, F, allow_uncertified=allow_uncertified)
        physical = report.trajectory
        layout = system.layout
    res_norms = None
    if scn.mode == "leontovich":
        res = boundary_residual(system, report)
        res_norms = np.linalg.norm(res.values, axis=1)
    return SimResult(report=report, physical=physical, layout=layout, residual_norms=res_norms)


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _write_json(path: Path, payload: dict) -> None:
    _write_text(path, json.dumps(payload, indent=2) + "\n")


def _steps_csv(sim: SimResult, nu: float) -> str:
    layout = sim.layout
    vals = sim.physical.values
    weights = sim.physical.state_weights
    weights = np.ones(vals.shape[1]) if weights is None else weights
    times = sim.physical.grid.times
    dt = sim.physical.grid.dt
    header = ["t"] + [f"norm_{name}" for name in layout.names] + ["weighted_cumulative"]
    if sim.residual_norms is not None:
        header.append("boundary_residual")
    lines = [",".join(header)]
    acc = 0.0
    for n, t in enumerate(times):
        row = [t]
        for name in layout.names:
            blk = layout.block(name)
            row.append(np.sqrt(np.sum(weights[blk] * vals[n, blk] ** 2)))
        acc += dt * np.exp(-2.0 * nu * t) * float(np.sum(weights * vals[n] ** 2))
        row.append(np.sqrt(acc))
        if sim.residual_norms is not None:
            row.append(sim.residual_norms[n])
        lines.append(",".join(_fmt(x) for x in row))
    return "\n".join(lines) + "\n"


def _final_state(sim: SimResult) -> dict:
    layout = sim.layout
    last = sim.physical.values[-1]
    return {
        "t": float(sim.physical.grid.times[-1]),
        "fields": {name: [float(x) for x in last[layout.block(name)]] for name in layout.names},
    }


def _fail(code: int, message: str) -> int:
    print(f"error: {message}", file=sys.stderr)
    return code


def _certified(system) -> bool:
    return bool(system.c0 > 0)


def _cmd_run(args) -> int:
    try:
        scn = load_scenario(args.scenario)
        system = build_system(scn)
        tg = _time_grid(scn)
    except ScenarioError as err:
        return _fail(EXIT_PARSE, str(err))
    except ValueError as err:
        return _fail(EXIT_PARSE, f"invalid scenario: {err}")
    override = bool(args.allow_uncertified or scn.spec.get("run", {}).get("allow_uncertified", False))
    if not _certified(system) and not override:
        return _fail(
            EXIT_CERT,
            f"system is not certified (c0={system.c0:g}); pass --allow-uncertified to run anyway",
        )
    try:
        sim = simulate(scn, system, tg, allow_uncertified=override)
    except ScenarioError as err:
        return _fail(EXIT_PARSE, str(err))
    except _SOLVER_ERRORS as err:
        return _fail(EXIT_SOLVE, f"solver failed: {err}")
    except ValueError as err:
        return _fail(EXIT_PARSE, f"invalid scenario: {err}")
    steps_path = scn.out_path("steps", ".csv")
    state_path = scn.out_path("state", ".json")
    _write_text(steps_path, _steps_csv(sim, tg.nu))
    _write_json(state_path, _final_state(sim))
    print(steps_path)
    print(state_path)
    return EXIT_OK


def _check(name: str, value: float, tolerance: float, comparison: str) -> dict:
    ok = {
        "<=": value <= tolerance,
        ">=": value >= tolerance,
        ">": value > tolerance,
    }[comparison]
    return {
        "name": name,
        "value": float(value),
        "tolerance": float(tolerance),
        "comparison": comparison,
        "passed": bool(ok),
    }


def _weighted_defects(system) -> tuple[float, float]:
    w = sp.diags(system.layout.weights)
    wa = w @ system.A.matrix
    wm = w @ system.M0.matrix
    skew = sp.linalg.norm(wa + wa.T) / max(sp.linalg.norm(wa), 1.0)
    sym = sp.linalg.norm(wm - wm.T) / max(sp.linalg.norm(wm), 1.0)
    return float(skew), float(sym)


def _structural_checks(scn: Scenario, system) -> list[dict]:
    checks = []
    skew, sym = _weighted_defects(system)
    checks.append(_check("operator_skew_defect", skew, 1e-13, "<="))
    checks.append(_check("m0_symmetry_defect", sym, 1e-13, "<="))
    cert = system.layout.meta["certificate"]
    for nu, val in cert.per_nu:
        checks.append(_check(f"c0[nu={nu:g}]", val, 0.0, ">"))
    values = [val for _, val in cert.per_nu]
    margin = min((b - a for a, b in zip(values, values[1:])), default=0.0)
    checks.append(_check("c0_nondecreasing_margin", margin, -1e-12, ">="))
    if scn.mode == "leontovich":
        checks.append(_check("null_space_bound", cert.null_space_bound, 0.0, ">"))
        bspaces = system.layout.meta["bspaces"]
    else:
        checks.append(_check("m0_null_dim", float(cert.null_dim), 0.0, "<="))
        pairs = system.layout.meta["pairs"]
        bspaces = {"grad": compute_boundary_space(pairs["grad"]), "em": compute_boundary_space(pairs["em"])}
    pairs = system.layout.meta["pairs"]
    for label, key in (("grad", "grad"), ("em", "em")):
        expected = pairs[key].mask.boundary_dofs.size
        mismatch = abs(bspaces[key].dim - expected)
        checks.append(_check(f"boundary_dim_mismatch_{label}", float(mismatch), 0.0, "<="))
    return checks


def _dynamic_checks(scn: Scenario, system, tg: TimeGrid) -> list[dict]:
    checks = []
    layout = system.layout
    rng = np.random.default_rng(1789)
    F = Trajectory(tg, rng.standard_normal((tg.n_steps, layout.size)), layout.weights)
    if tg.n_steps >= 4:
        a = tg.t0 + tg.dt * (tg.n_steps // 2)
        defect = causality_defect(lambda src: solve(system, src), F, a)
        checks.append(_check("causality_defect_rel", defect / weighted_norm(F), 1e-14, "<="))
    ratios = []
    for seed in range(5):
        src = Trajectory(
            tg, np.random.default_rng(seed).standard_normal((tg.n_steps, layout.size)), layout.weights
        )
        ratios.append(solve(system, src).stability_ratio)
    checks.append(_check("stability_ratio_max", max(ratios), (1.0 + 1e-6) / system.c0, "<="))
    if scn.mode == "leontovich":
        meta = layout.meta
        comp = meta["curl_comp"]
        # the assembled coupling only sees Q through Qc and cQ*, so the
        # symbol identity is claimed for Q restricted to the range of c
        q_eff = meta["q"] @ (-comp @ comp)
        params = LeontovichParams(Q=q_eff, alpha=meta["alpha"])
        worst = 0.0
        for z in (0.0, 0.1, 0.5):
            smat = S_of_z(params, comp, z)
            mmat = original_of_z(params, comp, z)
            worst = max(worst, float(np.abs(smat @ mmat - np.eye(smat.shape[0])).max()))
        checks.append(_check("s_identity_residual", worst, 1e-10, "<="))
        vals = np.zeros((tg.n_steps, layout.size))
        for name in ("velocity", "strain", "efield", "hfield"):
            blk = layout.block(name)
            vals[:, blk] = np.random.default_rng(99).standard_normal((tg.n_steps, blk.stop - blk.start))
        report = solve(system, Trajectory(tg, vals, layout.weights))
        res = boundary_residual(system, report)
        checks.append(
            _check("boundary_residual_max", float(np.linalg.norm(res.values, axis=1).max()), 1e-8, "<=")
        )
    return checks


def _grad_div_defects(grid: GridSpec) -> tuple[float, float]:
    pair = build_pair(grid, "grad")
    bs = compute_boundary_space(pair)
    bd = compute_boundary_space(pair.dual())
    gd = dotted_operator(bs, bd, pair.full)
    dv = dotted_operator(bd, bs, boundary_closed_dual(grid, pair))
    adj = adjoint_identity_report(gd, dv)
    unit = float(np.linalg.norm(gd.matrix.T @ gd.matrix - np.eye(gd.shape[1]), 2))
    return float(adj), unit


def _curl_sym_defect(grid: GridSpec) -> float:
    pair = scalar_em_pair_1d(grid) if grid.dim == 1 else build_pair(grid, "curl")
    bs = compute_boundary_space(pair)
    sq = dotted_operator(bs, bs, collocated_curl(grid, pair))
    return float(adjoint_identity_report(sq, sq, sign=-1.0) / max(np.linalg.norm(sq.matrix, 2), 1e-300))


def _trend_tables(scn: Scenario) -> dict:
    """Refinement trends on small fixed ladders of the scenario's dimension."""
    dim = scn.spec["grid"]["dim"]
    if scn.spec["grid"].get("periodic", False):
        return {}
    trends: dict[str, Any] = {}
    if dim == 1:
        rows = []
        for n in (8, 16, 32):
            adj, unit = _grad_div_defects(GridSpec(1, (n,), (1.0 / n,)))
            rows.append({"cells": n, "adjoint_defect": adj, "unitarity_defect": unit})
        ratios = [
            rows[i]["adjoint_defect"] / rows[i + 1]["adjoint_defect"] for i in range(len(rows) - 1)
        ] + [rows[i]["unitarity_defect"] / rows[i + 1]["unitarity_defect"] for i in range(len(rows) - 1)]
        trends["grad_div"] = {"rows": rows, "min_ratio": min(ratios), "passed": min(ratios) >= 1.5}
    if dim == 3:
        rows = []
        for n in (4, 6, 8):
            rows.append({"cells": n, "sym_defect_rel": _curl_sym_defect(GridSpec(3, (n,) * 3, (1.0 / n,) * 3))})
        seq = [row["sym_defect_rel"] for row in rows]
        passed = all(b < a for a, b in zip(seq, seq[1:]))
        trends["curl_sym"] = {"rows": rows, "passed": passed}
    return trends


def _cmd_verify(args) -> int:
    try:
        scn = load_scenario(args.scenario)
        system = build_system(scn)
        tg = _time_grid(scn)
    except ScenarioError as err:
        return _fail(EXIT_PARSE, str(err))
    except ValueError as err:
        return _fail(EXIT_PARSE, f"invalid scenario: {err}")
    checks = _structural_checks(scn, system)
    well_posed = _certified(system)
    if well_posed:
        try:
            checks.extend(_dynamic_checks(scn, system, tg))
        except _SOLVER_ERRORS as err:
            return _fail(EXIT_SOLVE, f"solver failed during verification: {err}")
    trends = _trend_tables(scn)
    report = {
        "scenario": scn.path.name,
        "mode": scn.mode,
        "grid": dict(scn.spec["grid"]),
        "well_posed": well_posed,
        "checks": checks,
        "trends": trends,
        "all_passed": bool(
            well_posed
            and all(c["passed"] for c in checks)
            and all(t["passed"] for t in trends.values())
        ),
    }
    path = scn.out_path("report", ".json")
    _write_json(path, report)
    print(path)
    override = bool(args.allow_uncertified or scn.spec.get("run", {}).get("allow_uncertified", False))
    if not well_posed and not override:
        return _fail(EXIT_CERT, f"system is not certified (c0={system.c0:g}); report written to {path}")
    return EXIT_OK


def _parallel_map(fn: Callable, items: Sequence) -> list:
    workers = int(os.environ.get("PEMLAB_WORKERS", "1") or 1)
    if workers <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _sweep_nu(scn: Scenario, system, values: list[float]) -> tuple[list[str], list[list]]:
    def row(nu):
        if not nu > 0:
            raise ScenarioError(f"nu values must be positive, got {nu}")
        return check_posdef(system.M0, system.M1, (nu,)).c0

    c0s = _parallel_map(row, values)
    rows = []
    for i, (nu, c0) in enumerate(zip(values, c0s)):
        nondec = 1 if i == 0 or c0 >= c0s[i - 1] - 1e-12 else 0
        rows.append([nu, c0, nondec])
    return ["nu", "c0", "nondecreasing"], rows


def _sweep_dt(scn: Scenario, system, values: list[float]) -> tuple[list[str], list[list]]:
    base = _time_grid(scn)
    horizon = base.dt * base.n_steps
    values = sorted(values, reverse=True)
    if scn.spec.get("boundary", {}).get("data"):
        # populate the lazy lifting caches before rows run concurrently
        simulate(scn, system, TimeGrid(nu=base.nu, dt=horizon, n_steps=1, t0=base.t0))

    def row(dt):
        steps = horizon / dt
        n = int(round(steps))
        if n < 1 or abs(steps - n) > 1e-9 * max(1.0, steps):
            raise ScenarioError(f"dt={dt:g} does not tile the horizon {horizon:g}")
        tg = TimeGrid(nu=base.nu, dt=dt, n_steps=n, t0=base.t0)
        sim = simulate(scn, system, tg, allow_uncertified=False)
        last = sim.physical.values[-1]
        weights = sim.physical.state_weights
        weights = np.ones(last.size) if weights is None else weights
        return n, float(np.sqrt(np.sum(weights * last**2)))

    results = _parallel_map(row, values)
    rows: list[list] = []
    finals = [final for _, final in results]
    for i, (dt, (n, final)) in enumerate(zip(values, results)):
        diff = abs(finals[i] - finals[i - 1]) if i >= 1 else float("nan")
        if i >= 2 and rows[i - 1][3] > 0 and diff > 0:
            order = float(np.log(rows[i - 1][3] / diff) / np.log(values[i - 1] / values[i]))
        else:
            order = float("nan")
        rows.append([dt, n, final, diff, order])
    return ["dt", "n_steps", "final_norm", "diff", "order"], rows


def _sweep_h(scn: Scenario, values: list[float]) -> tuple[list[str], list[list]]:
    g = scn.spec["grid"]
    if any(isinstance(v, (dict, list)) for v in scn.spec.get("coefficients", {}).values()):
        raise ScenarioError("h sweeps need resolution-independent (scalar) coefficients")
    extents = [c * h for c, h in zip(g["cells"], g["h"])]
    dim = g["dim"]
    values = sorted(values, reverse=True)

    def row(h):
        cells = []
        for extent in extents:
            n = extent / h
            if abs(n - round(n)) > 1e-9 * max(1.0, n) or round(n) < 2:
                raise ScenarioError(f"h={h:g} does not tile the domain extent {extent:g}")
            cells.append(int(round(n)))
        grid = GridSpec(dim, tuple(cells), (h,) * dim, periodic=bool(g.get("periodic", False)))
        adj, _ = _grad_div_defects(grid)
        basis_err = float("nan")
        if dim == 1:
            pair = build_pair(grid, "grad")
            bs = compute_boundary_space(pair)
            if bs.dim == 2:
                length = extents[0]
                x = np.linspace(0.0, length, cells[0] + 1)
                want = np.sinh(length - x) / np.sinh(length)
                basis_err = float(np.abs(bs.extensions[:, 0] - want).max())
        return cells[0], basis_err, adj

    results = _parallel_map(row, values)
    rows: list[list] = []
    for i, (h, (n, basis_err, adj)) in enumerate(zip(values, results)):
        if i >= 1 and results[i][1] > 0:
            order = float(np.log(results[i - 1][1] / results[i][1]) / np.log(values[i - 1] / values[i]))
        else:
            order = float("nan")
        ratio = results[i - 1][2] / adj if i >= 1 and adj > 0 else float("nan")
        rows.append([h, n, basis_err, order, adj, ratio])
    return ["h", "cells", "basis_error", "basis_order", "adjoint_defect", "defect_ratio"], rows


def _cmd_sweep(args) -> int:
    try:
        values = [float(tok) for tok in args.values.split(",") if tok.strip()]
    except ValueError:
        return _fail(EXIT_PARSE, f"cannot parse sweep values {args.values!r}")
    if len(values) < 2:
        return _fail(EXIT_PARSE, "sweeps need at least two values")
    try:
        scn = load_scenario(args.scenario)
        if args.axis == "h":
            header, rows = _sweep_h(scn, values)
        else:
            system = build_system(scn)
            if not _certified(system):
                return _fail(EXIT_CERT, f"system is not certified (c0={system.c0:g})")
            if args.axis == "nu":
                header, rows = _sweep_nu(scn, system, sorted(values))
            else:
                header, rows = _sweep_dt(scn, system, values)
    except ScenarioError as err:
        return _fail(EXIT_PARSE, str(err))
    except _SOLVER_ERRORS as err:
        return _fail(EXIT_SOLVE, f"solver failed during sweep: {err}")
    except ValueError as err:
        return _fail(EXIT_PARSE, f"invalid scenario: {err}")
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(x) if isinstance(x, int) else _fmt(x) for x in row))
    path = scn.out_path("sweep", f"_{args.axis}.csv")
    _write_text(path, "\n".join(lines) + "\n")
    print(path)
    return EXIT_OK


def _cmd_bdspace(args) -> int:
    try:
        scn = load_scenario(args.scenario)
        grid = _grid(scn)
    except ScenarioError as err:
        return _fail(EXIT_PARSE, str(err))
    except ValueError as err:
        return _fail(EXIT_PARSE, f"invalid scenario: {err}")
    grad = build_pair(grid, "grad")
    em = scalar_em_pair_1d(grid) if grid.dim == 1 else build_pair(grid, "curl")
    payload: dict[str, Any] = {"scenario": scn.path.name, "grid": dict(scn.spec["grid"]), "spaces": {}}
    for label, pair in (("grad", grad), ("em", em)):
        bs = compute_boundary_space(pair)
        expected = int(pair.mask.boundary_dofs.size)
        payload["spaces"][label] = {
            "dim": int(bs.dim),
            "boundary_dof_count": expected,
            "dim_matches": bool(bs.dim == expected),
        }
    adj, unit = _grad_div_defects(grid)
    payload["grad_div_adjoint_defect"] = adj
    payload["grad_unitarity_defect"] = unit
    payload["curl_sym_defect_rel"] = _curl_sym_defect(grid)
    path = scn.out_path("bdspace", ".json")
    _write_json(path, payload)
    print(path)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="pemlab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="solve the scenario and write step CSV + final state")
    run_p.add_argument("scenario")
    run_p.add_argument("--allow-uncertified", action="store_true")
    run_p.set_defaults(fn=_cmd_run)

    ver_p = sub.add_parser("verify", help="write a JSON report of all applicable checks")
    ver_p.add_argument("scenario")
    ver_p.add_argument("--allow-uncertified", action="store_true")
    ver_p.set_defaults(fn=_cmd_verify)

    sw_p = sub.add_parser("sweep", help="rerun across one axis and tabulate trends")
    sw_p.add_argument("scenario")
    sw_p.add_argument("--axis", required=True, choices=("h", "dt", "nu"))
    sw_p.add_argument("--values", required=True, help="comma-separated axis values")
    sw_p.set_defaults(fn=_cmd_sweep)

    bd_p = sub.add_parser("bdspace", help="report boundary-space dimensions and defects")
    bd_p.add_argument("scenario")
    bd_p.set_defaults(fn=_cmd_bdspace)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
