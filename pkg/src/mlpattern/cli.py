"""Command-line entry point.

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure.
Relative output directories are placed under $MLPATTERN_OUT when it is set.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import io
from .model import ConfigError, ModelParams, load_config
from .pde import (
    Grid, NonFiniteStateError, SpaceTime, WaveSpeedError, classify_pattern, estimate_wave_speed,
    parse_ic, simulate,
)
from .recipes import FIGURE_IDS, RecipeError, pick_branch, run_figures
from .singlecell import SCAN_PARAMS, IntegrationError, find_equilibria, scan_bifurcations
from .turing import UnstableEquilibriumError, dispersion, turing_test
from .waves import EigenError, WaveSearchError, find_wave_speed

OUT_ENV = "MLPATTERN_OUT"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(Exception):
    pass


def _out(path: str | None, default: str) -> Path:
    p = Path(path or default)
    root = os.environ.get(OUT_ENV)
    return p if p.is_absolute() or not root else Path(root) / p


def _params(args) -> tuple[ModelParams, float]:
    p, L = load_config(args.config)
    overrides = {}
    errors = []
    for item in args.set or []:
        key, eq, value = item.partition("=")
        if not eq:
            errors.append(f"--set expects KEY=VALUE (got {item!r})")
            continue
        try:
            overrides[key.strip()] = float(value)
        except ValueError:
            errors.append(f"{key}: cannot parse {value!r} as a number")
    if "L" in overrides:
        L = overrides.pop("L")
        if not L > 0:
            errors.append(f"L must be > 0 (got {L})")
    unknown = set(overrides) - set(p.as_dict())
    errors += [f"unknown key {k!r}" for k in sorted(unknown)]
    if errors:
        raise ConfigError(errors)
    return p.replace(**overrides), L


def _add_config(sp):
    sp.add_argument("--config", help="key = value parameter file (missing keys take defaults)")
    sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override one parameter (repeatable)")


def _settings(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config", "set")}


# ---------------------------------------------------------------------------


def cmd_bifurcate(args):
    p, L = _params(args)
    scan = scan_bifurcations(p, args.param, (args.from_, args.to), args.steps, jobs=args.jobs)
    out = _out(args.out, f"bifurcate_{args.param}")
    io.write_scan(out, scan)
    io.write_meta(out, p, L, _settings(args))
    for e in scan.events:
        print(f"{e.param_value:.6g}\t{e.kind}\t{e.evidence}")
    print(f"wrote {out}")


def cmd_turing(args):
    p, L = _params(args)
    eq = pick_branch(find_equilibria(p), args.branch)
    cert = turing_test(eq, p, k_max=args.k_max)
    d = dispersion(eq, p, args.k_max, args.n_k)
    out = _out(args.out, "dispersion.csv")
    io.write_dispersion(out, d)
    print(cert)
    print(f"wrote {out}")


def cmd_simulate(args):
    p, L = _params(args)
    eq = pick_branch(find_equilibria(p), args.branch)
    try:
        ic = parse_ic(args.ic, eq)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    grid = Grid(L, args.n_per_unit)
    st = simulate(ic, p, grid, args.t_end, args.save_every, args.rtol, args.atol)
    out = _out(args.out, "simulate")
    io.write_spacetime(out, st)
    io.write_meta(out, p, L, dict(_settings(args), seed_state=tuple(eq.state), ic_resolved=ic.describe()))
    cls = classify_pattern(st)
    lines = [f"classification = {cls.pattern.value}"]
    if cls.wave is not None:
        lines += [f"wave_speed = {cls.wave.speed!r}", f"wave_speed_stderr = {cls.wave.stderr!r}"]
    io.write_summary(out, lines)
    print("\n".join(lines))
    print(f"wrote {out}")


def cmd_shoot(args):
    p, L = _params(args)
    eqs = find_equilibria(p)
    orbit = find_wave_speed(pick_branch(eqs, args.from_), pick_branch(eqs, args.to), p,
                            (args.c_min, args.c_max), args.direction)
    out = _out(args.out, "shoot")
    io.write_orbit(out, orbit)
    io.write_meta(out, p, L, _settings(args))
    print(f"c = {orbit.c!r}\nclosure_distance = {orbit.closure_distance!r}\nkind = {orbit.kind.value}")
    print(f"wrote {out}")


def cmd_wavespeed(args):
    try:
        x, t, V = io.read_spacetime(args.spacetime)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc
    ws = estimate_wave_speed(SpaceTime(x, t, V, V), level=args.level)
    print(f"{ws.speed!r} +/- {ws.stderr!r}")


def cmd_repro(args):
    out = _out(args.out, ".")
    for fig, lines in run_figures(args.figure, out, args.n_per_unit, args.jobs):
        print(f"[{fig}] " + "; ".join(l for l in lines if not l.startswith(("r2", "spatial", "temporal",
                                                                          "crossing", "mean_", "amplitude"))))
    print(f"wrote {out}")


def cmd_validate(args):
    path = Path(args.path)
    if not path.exists() or path.is_dir():
        raise UsageError(f"cannot read {path}")
    p, L = load_config(path)
    defaults = ModelParams().as_dict()
    for k, v in dict(p.as_dict(), L=L).items():
        mark = "" if defaults.get(k, 1.0) == v else "   (changed)"
        print(f"{k} = {v!r}{mark}")


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="mlpattern", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("bifurcate", help="one-parameter bifurcation scan of the single cell")
    _add_config(sp)
    sp.add_argument("--param", choices=SCAN_PARAMS, required=True)
    sp.add_argument("--from", dest="from_", type=float, required=True)
    sp.add_argument("--to", type=float, required=True)
    sp.add_argument("--steps", type=int, default=500)
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_bifurcate)

    sp = sub.add_parser("turing-check", help="dispersion relation and no-Turing certificate")
    _add_config(sp)
    sp.add_argument("--param-at", dest="set", action="append", metavar="KEY=VALUE")
    sp.add_argument("--branch", default="lower")
    sp.add_argument("--k-max", type=float, default=100.0)
    sp.add_argument("--n-k", type=int, default=2001)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_turing)

    sp = sub.add_parser("simulate", help="method-of-lines run on [-L, L]")
    _add_config(sp)
    sp.add_argument("--ic", default="gaussian:A0=0.3,sigma=0.1")
    sp.add_argument("--branch", default="upper")
    sp.add_argument("--t-end", type=float, default=500.0)
    sp.add_argument("--save-every", type=float, default=1.0)
    sp.add_argument("--n-per-unit", type=int, default=1000)
    sp.add_argument("--rtol", type=float, default=1e-6)
    sp.add_argument("--atol", type=float, default=1e-9)
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("shoot", help="travelling wave speed by shooting")
    _add_config(sp)
    sp.add_argument("--from", dest="from_", default="lower")
    sp.add_argument("--to", default="lower")
    sp.add_argument("--c-min", type=float, required=True)
    sp.add_argument("--c-max", type=float, required=True)
    sp.add_argument("--direction", choices=("forward", "backward"), default="backward")
    sp.add_argument("--out")
    sp.set_defaults(func=cmd_shoot)

    sp = sub.add_parser("wavespeed", help="front speed from a spacetime_V.csv")
    sp.add_argument("--spacetime", required=True)
    sp.add_argument("--level", type=float)
    sp.set_defaults(func=cmd_wavespeed)

    sp = sub.add_parser("repro", help="re-run a figure panel (or a whole figure)",
                        epilog="ids: " + " ".join(FIGURE_IDS))
    sp.add_argument("figure")
    sp.add_argument("--out")
    sp.add_argument("--jobs", type=int, default=1)
    sp.add_argument("--n-per-unit", type=int, default=1000)
    sp.set_defaults(func=cmd_repro)

    sp = sub.add_parser("validate-config", help="resolve a config file and echo it")
    sp.add_argument("path")
    sp.set_defaults(func=cmd_validate)
    return ap


NUMERIC_ERRORS = (IntegrationError, NonFiniteStateError, WaveSearchError, WaveSpeedError, EigenError,
                  ArithmeticError, np.linalg.LinAlgError)


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        args.func(args)
    except ConfigError as exc:
        print("configuration error:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_USAGE
    except (UsageError, RecipeError, UnstableEquilibriumError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERIC_ERRORS as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
