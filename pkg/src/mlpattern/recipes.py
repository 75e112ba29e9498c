"""Canonical pipelines for each reproduced figure panel.

Every recipe writes plot-ready CSVs, a ``meta.txt`` that is itself a valid
config file, and a ``summary.txt``.

The psi family (bifurcation diagram in psi, the psi pattern panels and both
travelling-wave figures) needs three equilibria, which the default v1 does
not give. Those recipes use ``PSI_FAMILY_V1`` instead; see the README.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import io
from .model import DEFAULT_L, ModelParams
from .pde import (
    Grid, InitialCondition, SpaceTime, classify_pattern, estimate_wave_speed, front_track,
    simulate,
)
from .singlecell import Equilibrium, find_equilibria, scan_bifurcations
from .waves import find_wave_speed, TravellingWaveOrbit

PSI_FAMILY_V1 = -0.2465


class RecipeError(ValueError):
    pass


def pick_branch(eqs: list[Equilibrium], branch) -> Equilibrium:
    """``lower``/``upper`` = lowest/highest V, or an integer index in V order."""
    if not eqs:
        raise ValueError("no equilibria found")
    if branch in ("lower", None):
        return eqs[0]
    if branch == "upper":
        return eqs[-1]
    try:
        i = int(branch)
    except (TypeError, ValueError):
        raise ValueError(f"branch must be lower, upper or an index (got {branch!r})") from None
    if not -len(eqs) <= i < len(eqs):
        raise ValueError(f"branch index {i} out of range; {len(eqs)} equilibria")
    return eqs[i]


@dataclass(frozen=True)
class ScanRecipe:
    param: str
    span: tuple[float, float]
    steps: int = 500
    overrides: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PatternRecipe:
    overrides: dict
    ic: str = "gaussian"
    branch: str = "upper"
    t_end: float = 500.0


@dataclass(frozen=True)
class WaveRecipe:
    overrides: dict
    src: str  # branch names, orbit runs from src to dst in forward z
    dst: str
    c_bracket: tuple[float, float]
    t_end: float = 500.0
    branch: str = "lower"


_V1 = (-0.325, -0.265, -0.25, -0.248, -0.240, -0.230)
_V3 = (-0.3462, -0.3019, -0.2813, -0.23842, -0.1725, -0.05565)
_PSI = (0.1, 0.12, 0.13, 0.2, 0.3, 0.5)

RECIPES: dict[str, object] = {
    "3.1a": ScanRecipe("v1", (-0.35, -0.20)),
    "3.1b": ScanRecipe("v3", (-0.40, -0.02)),
    "3.1c": ScanRecipe("psi", (0.05, 0.6), overrides={"v1": PSI_FAMILY_V1}),
}
for _letter, _v in zip("abcdef", _V1):
    RECIPES[f"5.1{_letter}"] = PatternRecipe({"v1": _v})
    RECIPES[f"5.6{_letter}"] = PatternRecipe({"v1": _v}, ic="linear")
for _letter, _v in zip("abcdef", _V3):
    RECIPES[f"5.3{_letter}"] = PatternRecipe({"v3": _v})
for _letter, _v in zip("abcdef", _PSI):
    RECIPES[f"5.4{_letter}"] = PatternRecipe({"v1": PSI_FAMILY_V1, "psi": _v}, branch="lower")
RECIPES["6.3"] = WaveRecipe({"v1": PSI_FAMILY_V1, "psi": 0.1}, "lower", "lower", (0.004, 0.008))
RECIPES["6.4"] = WaveRecipe({"v1": PSI_FAMILY_V1, "psi": 0.5}, "upper", "lower", (0.003, 0.006))

FIGURE_IDS = tuple(sorted(RECIPES))


def expand(figure_id: str) -> list[str]:
    """A panel id, or a figure prefix such as ``5.4`` for all its panels."""
    if figure_id in RECIPES:
        return [figure_id]
    panels = [k for k in FIGURE_IDS if k[:-1] == figure_id]
    if not panels:
        raise RecipeError(f"unknown figure id {figure_id!r}; valid ids: {' '.join(FIGURE_IDS)}")
    return panels


def recipe_params(figure_id: str, base: ModelParams | None = None) -> ModelParams:
    r = RECIPES[expand(figure_id)[0]]
    return (base or ModelParams()).replace(**r.overrides)


# ---------------------------------------------------------------------------


def run_pattern(p: ModelParams, ic_kind: str, branch, t_end: float, L: float = DEFAULT_L,
                n_per_unit: int = 1000, save_every: float = 1.0) -> SpaceTime:
    eq = pick_branch(find_equilibria(p), branch)
    ic = InitialCondition.gaussian(eq) if ic_kind == "gaussian" else InitialCondition.linear(eq)
    return simulate(ic, p, Grid(L, n_per_unit), t_end, save_every)


def pattern_summary(st: SpaceTime) -> list[str]:
    cls = classify_pattern(st)
    lines = [f"classification = {cls.pattern.value}"]
    if cls.wave is not None:
        lines.append(f"wave_speed = {cls.wave.speed!r}")
        lines.append(f"wave_speed_stderr = {cls.wave.stderr!r}")
        lines.append(f"wave_level = {cls.wave.level!r}")
    for k, v in cls.metrics.items():
        lines.append(f"{k} = {v!r}")
    return lines


def profile_mismatch(orbit: TravellingWaveOrbit, st: SpaceTime, at_fraction: float = 0.85):
    """Align the orbit with a PDE snapshot and return (time, shift, max |dV|).

    The snapshot is the one whose rightmost mid-level crossing is closest to
    ``at_fraction * L``; both profiles are shifted so that these leading-edge
    crossings coincide, and the difference is taken on the orbit's support.
    """
    level = 0.5 * (orbit.V.min() + orbit.V.max())
    X = front_track(st.x, st.t, st.V, level)
    k = int(np.nanargmin(np.abs(X - at_fraction * st.L)))
    z = orbit.zeta
    s = np.sign(orbit.V - level)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)[-1]
    z_lead = z[idx] - (orbit.V[idx] - level) * (z[idx + 1] - z[idx]) / (orbit.V[idx + 1] - orbit.V[idx])
    shift = X[k] - z_lead
    xs = z + shift
    inside = (xs >= 0) & (xs <= st.L)
    diff = np.abs(np.interp(xs[inside], st.x, st.V[k]) - orbit.V[inside])
    return float(st.t[k]), float(shift), float(diff.max())


def run_recipe(figure_id: str, outdir, n_per_unit: int = 1000, jobs: int = 1, L: float = DEFAULT_L) -> dict:
    """Run one panel and write its outputs; returns a dict of headline results."""
    if figure_id not in RECIPES:
        raise RecipeError(f"unknown figure id {figure_id!r}; valid ids: {' '.join(FIGURE_IDS)}")
    r = RECIPES[figure_id]
    outdir = Path(outdir)
    p = ModelParams().replace(**r.overrides)
    t0 = time.perf_counter()
    result: dict = {"figure": figure_id}

    if isinstance(r, ScanRecipe):
        scan = scan_bifurcations(p, r.param, r.span, r.steps, jobs=jobs)
        io.write_scan(outdir, scan)
        io.write_meta(outdir, p, L, {"recipe": figure_id, "param": r.param, "range": r.span, "steps": r.steps})
        lines = [f"param = {r.param}", f"events = {len(scan.events)}"]
        lines += [f"{e.kind} at {e.param_value!r}: {e.evidence}" for e in scan.events]
        result.update(scan=scan, events=[(e.kind, e.param_value) for e in scan.events])

    elif isinstance(r, PatternRecipe):
        st = run_pattern(p, r.ic, r.branch, r.t_end, L, n_per_unit)
        io.write_spacetime(outdir, st)
        io.write_meta(outdir, p, L, {"recipe": figure_id, "ic": st.ic.describe(), "branch": r.branch,
                                     "seed_state": tuple(st.ic.base), "t_end": r.t_end, "save_every": 1.0,
                                     "n_per_unit": n_per_unit, "rtol": 1e-6, "atol": 1e-9})
        lines = pattern_summary(st)
        result.update(classification=lines[0].split(" = ")[1], spacetime=st)

    else:
        eqs = find_equilibria(p)
        st = run_pattern(p, "gaussian", r.branch, r.t_end, L, n_per_unit)
        io.write_spacetime(outdir, st)
        orbit = find_wave_speed(pick_branch(eqs, r.src), pick_branch(eqs, r.dst), p, r.c_bracket)
        io.write_orbit(outdir, orbit)
        pde_speed = estimate_wave_speed(st)
        t_cmp, shift, mismatch = profile_mismatch(orbit, st)
        io.write_meta(outdir, p, L, {"recipe": figure_id, "ic": st.ic.describe(), "branch": r.branch,
                                     "t_end": r.t_end, "n_per_unit": n_per_unit, "orbit": f"{r.src}->{r.dst}",
                                     "c_bracket": r.c_bracket, "direction": "backward"})
        lines = pattern_summary(st) + [
            f"shooting_speed = {orbit.c!r}",
            f"closure_distance = {orbit.closure_distance!r}",
            f"orbit_kind = {orbit.kind.value}",
            f"pde_speed = {pde_speed.speed!r}",
            f"pde_speed_stderr = {pde_speed.stderr!r}",
            f"relative_speed_gap = {float(abs(orbit.c - pde_speed.speed) / pde_speed.speed)!r}",
            f"profile_time = {t_cmp!r}",
            f"profile_max_abs_diff = {mismatch!r}",
        ]
        result.update(orbit=orbit, pde_speed=pde_speed, spacetime=st, profile_diff=mismatch)

    lines.append(f"runtime_s = {time.perf_counter() - t0:.1f}")
    io.write_summary(outdir, lines)
    result["summary"] = lines
    return result


def _task(args):
    fig, outdir, npu, L = args
    res = run_recipe(fig, outdir, npu, 1, L)
    return fig, res["summary"]


def run_figures(figure_id: str, outroot, n_per_unit: int = 1000, jobs: int = 1, L: float = DEFAULT_L):
    """Run every panel selected by ``figure_id``; yields (panel, summary lines)."""
    panels = expand(figure_id)
    outroot = Path(outroot)
    tasks = [(f, outroot / f"fig{f}", n_per_unit, L) for f in panels]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(jobs) as pool:
            yield from pool.map(_task, tasks)
    else:
        for fig, outdir, npu, L_ in tasks:
            res = run_recipe(fig, outdir, npu, jobs, L_)
            yield fig, res["summary"]
