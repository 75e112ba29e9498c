"""Dynamics of the uncoupled cell (D = 0).

Equilibria are located by Newton iteration from seeds spread over a voltage
interval; stable limit cycles are found by direct simulation. A parameter
scan combines both on a uniform grid and reports saddle-node, Hopf, SNIC,
homoclinic and saddle-node-of-cycles events.
"""

from __future__ import annotations

import enum
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.integrate import ODEintWarning, odeint
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq, linear_sum_assignment

from .model import CellState, ModelParams, jacobian_cell, n_inf, reaction

NEWTON_TOL = 1e-10
MERGE_TOL = 1e-6
SNIC_PERIOD_THRESHOLD = 500.0
CYCLE_AMP_THRESHOLD = 1e-3
RTOL = 1e-8
ATOL = 1e-10

SCAN_PARAMS = ("v1", "v3", "psi")


class IntegrationError(RuntimeError):
    def __init__(self, message: str, t_reached: float):
        self.t_reached = t_reached
        super().__init__(f"{message} (integration stopped at t={t_reached:.6g})")


class Stability(str, enum.Enum):
    STABLE_NODE = "StableNode"
    STABLE_FOCUS = "StableFocus"
    UNSTABLE_NODE = "UnstableNode"
    UNSTABLE_FOCUS = "UnstableFocus"
    SADDLE = "Saddle"

    @property
    def stable(self) -> bool:
        return self in (Stability.STABLE_NODE, Stability.STABLE_FOCUS)


def classify(jac: np.ndarray) -> tuple[np.ndarray, Stability]:
    """Eigenvalues (sorted by real part, descending) and the stability class."""
    eig = np.linalg.eigvals(jac).astype(complex)
    eig = eig[np.argsort(-eig.real, kind="stable")]
    det = np.linalg.det(jac)
    if det < 0:
        return eig, Stability.SADDLE
    focus = abs(eig[0].imag) > 0
    if eig[0].real < 0:
        return eig, Stability.STABLE_FOCUS if focus else Stability.STABLE_NODE
    return eig, Stability.UNSTABLE_FOCUS if focus else Stability.UNSTABLE_NODE


@dataclass(frozen=True)
class Equilibrium:
    state: CellState
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    stability: Stability
    residual: float

    @property
    def stable(self) -> bool:
        return self.stability.stable

    @classmethod
    def at(cls, state: CellState, p: ModelParams) -> "Equilibrium":
        V, N = state
        jac = jacobian_cell(V, N, p)
        eig, stab = classify(jac)
        dV, dN = reaction(V, N, p)
        return cls(CellState(float(V), float(N)), jac, eig, stab, max(abs(dV), abs(dN)))


@dataclass
class Trajectory:
    t: np.ndarray
    V: np.ndarray
    N: np.ndarray

    def state(self, i: int = -1) -> CellState:
        return CellState(float(self.V[i]), float(self.N[i]))


def scalar_rhs(p: ModelParams):
    """Fast scalar right-hand side ``rhs(y, t)`` for odeint-style callers."""
    gL, gK, gCa, vL, vK, vCa = p.gL, p.gK, p.gCa, p.vL, p.vK, p.vCa
    v1, v2, v3, v4, psi = p.v1, p.v2, p.v3, p.v4, p.psi
    tanh, cosh = math.tanh, math.cosh

    def rhs(y, t):
        V, N = y
        dV = -gL * (V - vL) - gK * N * (V - vK) - gCa * 0.5 * (1.0 + tanh((V - v1) / v2)) * (V - vCa)
        dN = psi * cosh((V - v3) / (2.0 * v4)) * (0.5 * (1.0 + tanh((V - v3) / v4)) - N)
        return dV, dN

    return rhs


def integrate_cell(
    s0: CellState,
    p: ModelParams,
    t_end: float,
    rtol: float = RTOL,
    atol: float = ATOL,
    t_eval=None,
) -> Trajectory:
    """Adaptive LSODA integration of the uncoupled cell from ``s0``.

    The solution is reported at ``t_eval`` (default: ten samples per time
    unit, at least 1001 points).
    """
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if t_eval is None:
        t_eval = np.linspace(0.0, t_end, max(1001, int(10 * t_end) + 1))
    t_eval = np.asarray(t_eval, dtype=float)
    jac = lambda y, t: jacobian_cell(y[0], y[1], p)
    with warnings.catch_warnings():
        # failures are reported through IntegrationError below
        warnings.simplefilter("ignore", ODEintWarning)
        y, info = odeint(
            scalar_rhs(p), [float(s0[0]), float(s0[1])], t_eval, Dfun=jac,
            rtol=rtol, atol=atol, mxstep=100000, full_output=True,
        )
    if info["message"] != "Integration successful.":
        raise IntegrationError(info["message"], float(info["tcur"].max()))
    return Trajectory(t_eval, y[:, 0], y[:, 1])


def newton(V: float, N: float, p: ModelParams, tol: float = NEWTON_TOL, maxiter: int = 60):
    """Damped Newton on reaction = 0; returns a CellState or None."""
    x = np.array([V, N], dtype=float)
    for _ in range(maxiter):
        F = np.array(reaction(x[0], x[1], p))
        if np.max(np.abs(F)) < tol:
            return CellState(float(x[0]), float(x[1]))
        J = jacobian_cell(x[0], x[1], p)
        try:
            step = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            return None
        scale = np.max(np.abs(step)) / 0.2
        if scale > 1:
            step /= scale
        x += step
        if not np.all(np.isfinite(x)) or abs(x[0]) > 10:
            return None
    F = np.array(reaction(x[0], x[1], p))
    return CellState(float(x[0]), float(x[1])) if np.max(np.abs(F)) < tol else None


def find_equilibria(
    p: ModelParams,
    v_range: tuple[float, float] = (-1.5, 1.0),
    n_seeds: int = 50,
    merge_tol: float = MERGE_TOL,
) -> list[Equilibrium]:
    """All equilibria reachable by Newton from ``n_seeds`` seeds, sorted by V.

    Seeds lie on the N-nullcline, N = n_inf(V), which leaves a
    one-dimensional search along V.
    """
    if n_seeds < 3:
        raise ValueError("n_seeds must be >= 3")
    found: list[CellState] = []
    for V0 in np.linspace(v_range[0], v_range[1], n_seeds):
        s = newton(V0, float(n_inf(V0, p)), p)
        if s is None:
            continue
        if all(math.hypot(s.V - q.V, s.N - q.N) >= merge_tol for q in found):
            found.append(s)
    found.sort(key=lambda s: s.V)
    return [Equilibrium.at(s, p) for s in found]


@dataclass
class LimitCycleMeasurement:
    period: float
    v_min: float
    v_max: float
    stable: bool = True
    param_value: float | None = None
    state: CellState | None = None  # point of the cycle at maximal V
    V: np.ndarray | None = field(default=None, repr=False)
    N: np.ndarray | None = field(default=None, repr=False)

    @property
    def amplitude(self) -> float:
        return self.v_max - self.v_min

    def distance_to(self, s: CellState) -> float:
        return float(np.min(np.hypot(self.V - s.V, self.N - s.N)))


def measure_limit_cycle(
    p: ModelParams,
    s0: CellState,
    t_transient: float = 1500.0,
    t_measure: float = 1500.0,
    rtol: float = RTOL,
    atol: float = ATOL,
    samples_per_unit: float = 20.0,
) -> LimitCycleMeasurement | None:
    """Settle onto an attractor and measure it if it is an oscillation.

    Returns None for small amplitude (< CYCLE_AMP_THRESHOLD), for fewer than
    three upward crossings of the mid-level, or for oscillations whose
    amplitude is still decaying over the measurement window.
    """
    if not (t_transient > 0 and t_measure > 0):
        raise ValueError("t_transient and t_measure must be positive")
    pre = integrate_cell(s0, p, t_transient, rtol, atol, t_eval=[0.0, t_transient])
    n = int(max(2000, samples_per_unit * t_measure))
    t = np.linspace(0.0, t_measure, n)
    run = integrate_cell(pre.state(), p, t_measure, rtol, atol, t_eval=t)
    V, N = run.V, run.N
    v_min, v_max = float(V.min()), float(V.max())
    if v_max - v_min < CYCLE_AMP_THRESHOLD:
        return None

    third = n // 3
    if np.ptp(V[-third:]) < 0.9 * np.ptp(V[:third]):
        return None

    level = 0.5 * (v_min + v_max)
    idx = np.nonzero((V[:-1] < level) & (V[1:] >= level))[0]
    if idx.size < 3:
        return None
    dV = reaction(V[idx], N[idx], p)[0], reaction(V[idx + 1], N[idx + 1], p)[0]
    crossings = np.empty(idx.size)
    for k, i in enumerate(idx):
        spline = CubicHermiteSpline(t[i:i + 2], V[i:i + 2] - level, [dV[0][k], dV[1][k]])
        crossings[k] = brentq(spline, t[i], t[i + 1])
    period = float(np.mean(np.diff(crossings)))

    # one full period, for distances and plotting
    i0, i1 = idx[-2], idx[-1] + 1
    Vc, Nc = V[i0:i1 + 1], N[i0:i1 + 1]
    k = int(np.argmax(Vc))
    return LimitCycleMeasurement(
        period, v_min, v_max, True, None, CellState(float(Vc[k]), float(Nc[k])), Vc, Nc
    )


# ---------------------------------------------------------------------------
# one-parameter scans


@dataclass
class BranchPoint:
    param_value: float
    equilibrium: Equilibrium
    branch_id: int


@dataclass
class BifurcationEvent:
    param_value: float
    kind: str  # SN, Hopf, SNIC, Homoclinic, SNC, Ambiguous
    evidence: str
    data: dict = field(default_factory=dict)


@dataclass
class BifurcationScan:
    param_name: str
    values: np.ndarray
    points: list[BranchPoint]
    events: list[BifurcationEvent]
    cycles: list[LimitCycleMeasurement]

    def branches(self) -> dict[int, list[BranchPoint]]:
        out: dict[int, list[BranchPoint]] = {}
        for bp in self.points:
            out.setdefault(bp.branch_id, []).append(bp)
        return out

    def events_of(self, kind: str) -> list[BifurcationEvent]:
        return [e for e in self.events if e.kind == kind]

    def equilibrium_counts(self) -> np.ndarray:
        counts = {v: 0 for v in self.values}
        for bp in self.points:
            counts[bp.param_value] += 1
        return np.array([counts[v] for v in self.values])


def _equilibria_task(args):
    p, name, value = args
    return find_equilibria(p.replace(**{name: value}))


def _count(p: ModelParams, name: str, value: float) -> int:
    return len(find_equilibria(p.replace(**{name: value})))


def _track(values, eq_lists, merge_tol):
    """Nearest-neighbour branch labelling; returns points and ambiguity notes."""
    points: list[BranchPoint] = []
    notes: list[BifurcationEvent] = []
    active: dict[int, CellState] = {}
    next_id = 0
    for value, eqs in zip(values, eq_lists):
        ids = [None] * len(eqs)
        if active and eqs:
            old_ids = list(active)
            cost = np.array(
                [[math.hypot(e.state.V - active[o].V, e.state.N - active[o].N) for o in old_ids]
                 for e in eqs]
            )
            rows, cols = linear_sum_assignment(cost)
            for r, c in zip(rows, cols):
                ids[r] = old_ids[c]
            for o in range(cost.shape[1]):
                close = np.nonzero(cost[:, o] < merge_tol)[0]
                if close.size > 1:
                    notes.append(BifurcationEvent(
                        float(value), "Ambiguous",
                        f"branch {old_ids[o]} has {close.size} candidates within merge_tol",
                    ))
        active = {}
        for i, e in enumerate(eqs):
            if ids[i] is None:
                ids[i] = next_id
                next_id += 1
            active[ids[i]] = e.state
            points.append(BranchPoint(float(value), e, ids[i]))
    return points, notes


def _refine_fold(p, name, a, b, iters=45):
    """Bisect the equilibrium-count change between ``a`` and ``b``."""
    ca = _count(p, name, a)
    for _ in range(iters):
        m = 0.5 * (a + b)
        if (_count(p, name, m) >= 2) == (ca >= 2):
            a = m
        else:
            b = m
    return 0.5 * (a + b)


def _continue_eq(p, name, value, guess: CellState) -> Equilibrium | None:
    s = newton(guess.V, guess.N, p.replace(**{name: value}))
    return None if s is None else Equilibrium.at(s, p.replace(**{name: value}))


def _refine_hopf(p, name, a, b, guess: CellState, iters=50):
    ea = _continue_eq(p, name, a, guess)
    sa = np.sign(ea.eigenvalues[0].real)
    eq = ea
    for _ in range(iters):
        m = 0.5 * (a + b)
        em = _continue_eq(p, name, m, eq.state)
        if em is None:
            break
        eq = em
        if np.sign(em.eigenvalues[0].real) == sa:
            a = m
        else:
            b = m
    return 0.5 * (a + b), eq


def _cycle_seeds(eqs: Sequence[Equilibrium]) -> list[CellState]:
    seeds = []
    for e in eqs:
        if e.stability in (Stability.UNSTABLE_FOCUS, Stability.UNSTABLE_NODE):
            seeds.append(CellState(e.state.V + 1e-3, e.state.N))
    return seeds


def _same_cycle(a: LimitCycleMeasurement, b: LimitCycleMeasurement) -> bool:
    return abs(a.period - b.period) < 1e-3 * a.period and abs(a.v_max - b.v_max) < 1e-3


def _sweep_cycles(p, name, values, eq_lists, order, cycle_kw):
    found: dict[int, list[LimitCycleMeasurement]] = {}
    prev: LimitCycleMeasurement | None = None
    for i in order:
        pv = p.replace(**{name: values[i]})
        seeds = ([prev.state] if prev is not None else []) + _cycle_seeds(eq_lists[i])
        prev = None
        for s in seeds:
            m = measure_limit_cycle(pv, s, **cycle_kw)
            if m is not None:
                m.param_value = float(values[i])
                found.setdefault(i, []).append(m)
                prev = prev or m
                break
    return found


def scan_bifurcations(
    p: ModelParams,
    param_name: str,
    param_range: tuple[float, float],
    steps: int = 500,
    *,
    cycles: bool = True,
    jobs: int = 1,
    merge_tol: float = MERGE_TOL,
    cycle_kw: dict | None = None,
) -> BifurcationScan:
    """Sweep one parameter on a uniform grid and detect bifurcations.

    Equilibrium branches are tracked by nearest-neighbour matching. Stable
    cycles are followed by simulation in both sweep directions, each run
    seeded from the cycle found at the previous grid value; this exposes
    bistable windows (hysteresis) without computing unstable cycles.
    """
    if param_name not in SCAN_PARAMS:
        raise ValueError(f"param_name must be one of {SCAN_PARAMS}")
    if steps < 100:
        raise ValueError("steps must be >= 100")
    values = np.linspace(param_range[0], param_range[1], steps)
    h = values[1] - values[0]
    tasks = [(p, param_name, float(v)) for v in values]
    if jobs > 1:
        with ProcessPoolExecutor(jobs) as pool:
            eq_lists = list(pool.map(_equilibria_task, tasks, chunksize=8))
    else:
        eq_lists = [_equilibria_task(t) for t in tasks]

    points, events = _track(values, eq_lists, merge_tol)

    # saddle-node: change in the equilibrium count
    counts = np.array([len(e) for e in eq_lists])
    for i in np.nonzero(np.diff(counts))[0]:
        loc = _refine_fold(p, param_name, values[i], values[i + 1])
        side = "above" if counts[i + 1] > counts[i] else "below"
        events.append(BifurcationEvent(
            loc, "SN",
            f"equilibrium count {counts[i]}->{counts[i + 1]}; pair exists {side} the fold",
            {"pair_side": side},
        ))

    # Hopf: sign change of Re of a complex pair along a tracked branch
    by_branch: dict[int, list[BranchPoint]] = {}
    for bp in points:
        by_branch.setdefault(bp.branch_id, []).append(bp)
    for bid, pts in by_branch.items():
        for a, b in zip(pts[:-1], pts[1:]):
            la, lb = a.equilibrium.eigenvalues[0], b.equilibrium.eigenvalues[0]
            if np.sign(la.real) == np.sign(lb.real):
                continue
            if abs(la.imag) == 0 or abs(lb.imag) == 0:
                continue
            loc, eq = _refine_hopf(p, param_name, a.param_value, b.param_value, a.equilibrium.state)
            lam = eq.eigenvalues[0]
            stable_side = "below" if la.real < 0 else "above"
            events.append(BifurcationEvent(
                loc, "Hopf",
                f"branch {bid}: Re(lambda) changes sign, Im(lambda)={abs(lam.imag):.6g}, "
                f"equilibrium stable {stable_side}",
                {"branch": bid, "imag": abs(lam.imag), "stable_side": stable_side,
                 "V": eq.state.V, "N": eq.state.N},
            ))

    cycle_list: list[LimitCycleMeasurement] = []
    if cycles:
        kw = dict(cycle_kw or {})
        up = _sweep_cycles(p, param_name, values, eq_lists, range(len(values)), kw)
        down = _sweep_cycles(p, param_name, values, eq_lists, range(len(values) - 1, -1, -1), kw)
        per_index: dict[int, list[LimitCycleMeasurement]] = {}
        for src in (up, down):
            for i, ms in src.items():
                for m in ms:
                    bucket = per_index.setdefault(i, [])
                    if not any(_same_cycle(m, q) for q in bucket):
                        bucket.append(m)
        for i in sorted(per_index):
            cycle_list.extend(per_index[i])
        events.extend(_cycle_events(p, param_name, values, h, eq_lists, per_index, events, kw))

    events.sort(key=lambda e: e.param_value)
    return BifurcationScan(param_name, values, points, events, cycle_list)


def _cycle_events(p, name, values, h, eq_lists, per_index, events, kw):
    """Classify each boundary of the stable-cycle existence set."""
    has = np.array([i in per_index for i in range(len(values))])
    new_events: list[BifurcationEvent] = []
    for i in np.nonzero(np.diff(has.astype(int)))[0]:
        ic, inone = (i, i + 1) if has[i] else (i + 1, i)
        cyc = max(per_index[ic], key=lambda m: m.amplitude)
        lo, hi = sorted((values[i], values[i + 1]))
        near = [e for e in events if lo - 1.01 * abs(h) <= e.param_value <= hi + 1.01 * abs(h)]

        sn = [e for e in near if e.kind in ("SN", "SNIC")]
        if sn:
            ev = sn[0]
            periods = _approach_periods(p, name, ev.param_value, values[ic], cyc, kw)
            grows = len(periods) >= 2 and all(b > a for a, b in zip(periods, periods[1:]))
            if periods and grows and periods[-1] > SNIC_PERIOD_THRESHOLD:
                ev.kind = "SNIC"
                ev.evidence += (
                    f"; stable cycle period grows to {periods[-1]:.4g} approaching the fold "
                    f"(periods {', '.join(f'{q:.4g}' for q in periods)})"
                )
                ev.data["periods"] = periods
                ev.data["onset_period"] = periods[-1]
            continue

        hopf = [e for e in near if e.kind == "Hopf"]
        if hopf and cyc.amplitude < 0.15:
            ev = hopf[0]
            ev.evidence += f"; small stable cycle (amplitude {cyc.amplitude:.3g}) on the unstable side: supercritical"
            ev.data["criticality"] = "supercritical"
            ev.data["onset_period"] = cyc.period
            continue

        loc, last = _refine_cycle_boundary(p, name, values[ic], values[inone], cyc, kw)
        saddles = [e for e in eq_lists[ic] if e.stability is Stability.SADDLE]
        dist = min((last.distance_to(s.state) for s in saddles), default=np.inf)
        if saddles and dist < 0.02:
            new_events.append(BifurcationEvent(
                loc, "Homoclinic",
                f"stable cycle vanishes; orbit passes within {dist:.3g} of a saddle, period {last.period:.4g}",
                {"period": last.period, "saddle_distance": dist},
            ))
        else:
            new_events.append(BifurcationEvent(
                loc, "SNC",
                f"stable cycle (amplitude {last.amplitude:.3g}, period {last.period:.4g}) vanishes "
                "while a stable equilibrium persists: fold of cycles",
                {"period": last.period, "amplitude": last.amplitude},
            ))
            for ev in hopf:
                ev.data.setdefault("criticality", "subcritical")
    for ev in events:
        if ev.kind != "Hopf" or "criticality" in ev.data:
            continue
        # a large stable cycle on the side where the equilibrium is stable
        # means the Hopf cycle is unstable and folds back (hysteresis)
        i = int(np.argmin(np.abs(values - ev.param_value)))
        step = -1 if (ev.data["stable_side"] == "below") == (h > 0) else 1
        j = i + step if (values[i] - ev.param_value) * step * np.sign(h) <= 0 else i
        if j in per_index and max(m.amplitude for m in per_index[j]) >= 0.15:
            ev.data["criticality"] = "subcritical"
            ev.evidence += "; large stable cycle coexists with the stable equilibrium: subcritical"
    for ev in events:
        if ev.kind == "Hopf" and "onset_period" not in ev.data:
            i = int(np.argmin(np.abs(values - ev.param_value)))
            for j in (i - 1, i, i + 1):
                if j in per_index:
                    ev.data["onset_period"] = min(m.period for m in per_index[j])
                    break
    return new_events


def _approach_periods(p, name, fold, start, cyc, kw, n=6):
    """Periods of the stable cycle at geometrically shrinking distances from a fold."""
    d0 = start - fold
    periods = []
    prev = cyc
    for k in range(n):
        v = fold + d0 * 10.0 ** (-k)
        if k and abs(v - fold) < 1e-12:
            break
        T_guess = periods[-1] if periods else cyc.period
        t_meas = max(kw.get("t_measure", 1500.0), 4.0 * T_guess * 3)
        m = measure_limit_cycle(
            p.replace(**{name: v}), prev.state,
            t_transient=max(kw.get("t_transient", 1500.0), 2 * T_guess * 3),
            t_measure=t_meas,
        )
        if m is None:
            break
        periods.append(m.period)
        prev = m
        if m.period > 2 * SNIC_PERIOD_THRESHOLD:
            break
    return periods


def _refine_cycle_boundary(p, name, inside, outside, cyc, kw, iters=12):
    last = cyc
    for _ in range(iters):
        m = 0.5 * (inside + outside)
        meas = measure_limit_cycle(p.replace(**{name: m}), last.state, **kw)
        if meas is None:
            outside = m
        else:
            inside, last = m, meas
    return 0.5 * (inside + outside), last
