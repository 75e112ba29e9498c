"""Method-of-lines solver for the coupled cable on [-L, L].

V diffuses with coefficient D, N does not. Space is discretised by second
order central differences; no-flux ends use a reflected ghost node, so the
boundary row of the Laplacian reads 2 (V_1 - V_0) / dx**2. The resulting
stiff system is advanced with scipy's BDF using the exact sparse Jacobian.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.integrate import solve_ivp
from scipy.stats import linregress

from .model import CellState, ModelParams, jacobian_cell, reaction
from .singlecell import Equilibrium, IntegrationError

RTOL = 1e-6
ATOL = 1e-9

# classify_pattern thresholds
SPATIAL_VAR_TOL = 1e-8
TEMPORAL_VAR_TOL = 1e-8
TRAVEL_R2 = 0.999
MIN_FIT_POINTS = 10
OSC_MEAN_SPREAD = 0.02


@dataclass(frozen=True)
class Grid:
    L: float = 1.0
    n_per_unit: int = 1000

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be positive")
        if self.n_points < 3:
            raise ValueError("grid needs at least 3 nodes")

    @property
    def n_points(self) -> int:
        return int(round(2 * self.L * self.n_per_unit)) + 1

    @property
    def x(self) -> np.ndarray:
        return np.linspace(-self.L, self.L, self.n_points)

    @property
    def dx(self) -> float:
        return 2 * self.L / (self.n_points - 1)


@dataclass
class Field:
    time: float
    V: np.ndarray
    N: np.ndarray

    def check(self, grid: Grid):
        if self.V.shape != (grid.n_points,) or self.N.shape != (grid.n_points,):
            raise ValueError(f"field has {self.V.shape}/{self.N.shape} values, grid has {grid.n_points} nodes")


def laplacian(grid: Grid) -> sp.csr_matrix:
    """No-flux second-difference matrix (without the factor D)."""
    n = grid.n_points
    upper = np.ones(n - 1)
    lower = np.ones(n - 1)
    upper[0] = 2.0
    lower[-1] = 2.0
    return sp.diags([lower, -2.0 * np.ones(n), upper], [-1, 0, 1], format="csr") / grid.dx**2


def semidiscretize(f: Field, p: ModelParams, grid: Grid, lap: sp.csr_matrix | None = None) -> Field:
    f.check(grid)
    if lap is None:
        lap = laplacian(grid)
    dV, dN = reaction(f.V, f.N, p)
    return Field(f.time, p.D * (lap @ f.V) + dV, dN)


# ---------------------------------------------------------------------------
# initial conditions


class ICKind(str, enum.Enum):
    GAUSSIAN = "gaussian"
    LINEAR = "linear"
    CUSTOM = "custom"


@dataclass(frozen=True)
class InitialCondition:
    """Homogeneous state plus a perturbation G(x) added to V."""

    kind: ICKind
    base: CellState
    A0: float = 0.3
    sigma: float = 0.1
    eps: float = 0.025
    custom: tuple | None = None  # (V, N) arrays for CUSTOM

    def __post_init__(self):
        if self.kind is ICKind.GAUSSIAN and not self.sigma > 0:
            raise ValueError("sigma must be positive")
        if self.kind is ICKind.CUSTOM and self.custom is None:
            raise ValueError("custom initial condition needs (V, N) arrays")

    @classmethod
    def gaussian(cls, base, A0: float = 0.3, sigma: float = 0.1):
        return cls(ICKind.GAUSSIAN, _state(base), A0=A0, sigma=sigma)

    @classmethod
    def linear(cls, base, eps: float = 0.025):
        return cls(ICKind.LINEAR, _state(base), eps=eps)

    @classmethod
    def tabulated(cls, V, N):
        V = np.asarray(V, dtype=float)
        N = np.asarray(N, dtype=float)
        return cls(ICKind.CUSTOM, CellState(float(V.mean()), float(N.mean())), custom=(V, N))

    def perturbation(self, x: np.ndarray) -> np.ndarray:
        if self.kind is ICKind.GAUSSIAN:
            return self.A0 * np.exp(-(x**2) / (2 * self.sigma**2))
        if self.kind is ICKind.LINEAR:
            return self.eps * x
        return self.custom[0] - self.base.V

    def field(self, grid: Grid) -> Field:
        x = grid.x
        if self.kind is ICKind.CUSTOM:
            V, N = (np.array(a, dtype=float) for a in self.custom)
        else:
            V = self.base.V + self.perturbation(x)
            N = np.full_like(x, self.base.N)
        f = Field(0.0, V, N)
        f.check(grid)
        return f

    def describe(self) -> str:
        if self.kind is ICKind.GAUSSIAN:
            return f"gaussian:A0={self.A0!r},sigma={self.sigma!r}"
        if self.kind is ICKind.LINEAR:
            return f"linear:eps={self.eps!r}"
        return "custom"


def _state(base) -> CellState:
    if isinstance(base, Equilibrium):
        return base.state
    return CellState(float(base[0]), float(base[1]))


def parse_ic(spec: str, base) -> InitialCondition:
    """Parse ``gaussian:A0=0.3,sigma=0.1`` or ``linear:eps=0.025``."""
    kind, _, args = spec.partition(":")
    kw = {}
    for item in filter(None, args.split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise ValueError(f"bad initial-condition argument {item!r}")
        kw[key.strip()] = float(value)
    kind = kind.strip().lower()
    allowed = {"gaussian": {"A0", "sigma"}, "linear": {"eps"}}
    if kind not in allowed:
        raise ValueError(f"unknown initial condition {kind!r} (use gaussian or linear)")
    unknown = set(kw) - allowed[kind]
    if unknown:
        raise ValueError(f"unknown {kind} arguments: {sorted(unknown)}")
    return InitialCondition.gaussian(base, **kw) if kind == "gaussian" else InitialCondition.linear(base, **kw)


# ---------------------------------------------------------------------------
# time stepping


class NonFiniteStateError(FloatingPointError):
    def __init__(self, t: float, variable: str, node: int):
        self.t, self.variable, self.node = t, variable, node
        super().__init__(f"non-finite {variable} at node {node}, t={t:.6g}")


@dataclass
class SpaceTime:
    """Saved snapshots: ``V[i, j]`` is V at time ``t[i]`` and node ``x[j]``."""

    x: np.ndarray
    t: np.ndarray
    V: np.ndarray
    N: np.ndarray
    params: ModelParams | None = None
    grid: Grid | None = None
    ic: InitialCondition | None = None
    stats: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.t)

    def fields(self) -> list[Field]:
        return [Field(float(t), V, N) for t, V, N in zip(self.t, self.V, self.N)]

    @property
    def L(self) -> float:
        return float(self.x[-1])


def _check_finite(t, y, n):
    if not np.all(np.isfinite(y)):
        bad = int(np.flatnonzero(~np.isfinite(y))[0])
        raise NonFiniteStateError(t, "V" if bad < n else "N", bad % n)


def simulate(
    ic: InitialCondition,
    p: ModelParams,
    grid: Grid,
    t_end: float,
    save_every: float = 1.0,
    rtol: float = RTOL,
    atol: float = ATOL,
) -> SpaceTime:
    """Integrate the semi-discrete system; snapshots at multiples of save_every."""
    if not t_end > 0:
        raise ValueError("t_end must be positive")
    if not save_every > 0:
        raise ValueError("save_every must be positive")
    n = grid.n_points
    lap = p.D * laplacian(grid)
    f0 = ic.field(grid)

    def rhs(t, y):
        V, N = y[:n], y[n:]
        _check_finite(t, y, n)
        dV, dN = reaction(V, N, p)
        return np.concatenate([lap @ V + dV, dN])

    def jac(t, y):
        (f_V, f_N), (g_V, g_N) = jacobian_cell(y[:n], y[n:], p)
        return sp.bmat([[lap + sp.diags(f_V), sp.diags(f_N)],
                        [sp.diags(g_V), sp.diags(g_N)]], format="csc")

    y0 = np.concatenate([f0.V, f0.N])
    _check_finite(0.0, y0, n)
    t_save = np.arange(0.0, t_end, save_every)
    t_save = np.append(t_save, t_end) if t_end - t_save[-1] > 1e-12 * t_end else t_save
    sol = solve_ivp(rhs, (0.0, t_end), y0, method="BDF",
                    t_eval=t_save, jac=jac, rtol=rtol, atol=atol)
    if sol.status != 0:
        reached = float(sol.t[-1]) if sol.t.size else 0.0
        raise IntegrationError(sol.message, reached)
    stats = {"nfev": sol.nfev, "njev": sol.njev, "nlu": sol.nlu}
    return SpaceTime(grid.x, sol.t, sol.y[:n].T.copy(), sol.y[n:].T.copy(), p, grid, ic, stats)


# ---------------------------------------------------------------------------
# post-processing


class Pattern(str, enum.Enum):
    HOMOGENEOUS_STEADY = "HomogeneousSteady"
    HOMOGENEOUS_OSCILLATION = "HomogeneousOscillation"
    TRAVELLING_PULSE = "TravellingPulse"
    TRAVELLING_FRONT = "TravellingFront"
    COMPLEX = "Complex"


class WaveSpeedError(ValueError):
    pass


@dataclass(frozen=True)
class WaveSpeed:
    speed: float
    stderr: float
    r2: float
    n_points: int
    level: float

    def __str__(self):
        return f"{self.speed:.6g} +/- {self.stderr:.2g}"


def rightmost_crossing(x: np.ndarray, V: np.ndarray, level: float) -> float:
    """Largest x >= 0 where V crosses ``level``, by linear interpolation; nan if none."""
    m = x >= 0
    xs, v = x[m], V[m] - level
    s = np.sign(v)
    idx = np.flatnonzero(s[:-1] * s[1:] < 0)
    exact = np.flatnonzero(v == 0)
    cands = []
    if idx.size:
        i = idx[-1]
        cands.append(xs[i] - v[i] * (xs[i + 1] - xs[i]) / (v[i + 1] - v[i]))
    if exact.size:
        cands.append(xs[exact[-1]])
    return max(cands) if cands else np.nan


def front_track(x, t, V, level):
    return np.array([rightmost_crossing(x, v, level) for v in V])


def estimate_wave_speed(
    st: SpaceTime,
    level: float | None = None,
    window: tuple[float, float] = (0.1, 0.9),
    t_window: tuple[float, float] | None = None,
) -> WaveSpeed:
    """Least-squares speed of the rightmost level crossing of V.

    Only positions inside ``window`` (fractions of L) are fitted, which
    drops the initial transient near x = 0 and the boundary layer at x = L.
    The default level is the midpoint of the V range over the run, i.e.
    halfway up a pulse or halfway between the two states of a front.
    """
    x, t, V = st.x, st.t, st.V
    if t_window is not None:
        m = (t >= t_window[0]) & (t <= t_window[1])
        t, V = t[m], V[m]
    if level is None:
        level = 0.5 * (float(V.min()) + float(V.max()))
    X = front_track(x, t, V, level)
    L = x[-1]
    ok = np.isfinite(X) & (X > window[0] * L) & (X < window[1] * L)
    if ok.sum() < 3:
        raise WaveSpeedError(
            f"only {int(ok.sum())} level crossings at V={level:.6g} inside x in "
            f"({window[0] * L:.3g}, {window[1] * L:.3g}); cannot fit a speed"
        )
    fit = linregress(t[ok], X[ok])
    return WaveSpeed(float(fit.slope), float(fit.stderr), float(fit.rvalue**2), int(ok.sum()), float(level))


def _travelling(st: SpaceTime, V: np.ndarray, t: np.ndarray):
    """(Pattern, WaveSpeed) if the level set moves linearly, else None."""
    try:
        ws = estimate_wave_speed(SpaceTime(st.x, t, V, V))
    except WaveSpeedError:
        return None
    if ws.n_points < MIN_FIT_POINTS or ws.r2 <= TRAVEL_R2 or ws.speed == 0:
        return None
    x = st.x
    X = front_track(x, t, V, ws.level)
    ok = np.flatnonzero(np.isfinite(X) & (X > 0.1 * x[-1]) & (X < 0.9 * x[-1]))
    k = ok[len(ok) // 2]
    ahead = V[k, -1]
    behind = V[k, (x > 0) & (x < X[k])]
    frac = np.mean(np.abs(behind - ahead) > abs(ws.level - ahead)) if behind.size else 0.0
    return (Pattern.TRAVELLING_FRONT if frac > 0.5 else Pattern.TRAVELLING_PULSE), ws


@dataclass(frozen=True)
class Classification:
    pattern: Pattern
    wave: WaveSpeed | None
    metrics: dict

    def __str__(self):
        s = self.pattern.value
        if self.wave is not None:
            s += f" (speed {self.wave})"
        return s


def classify_pattern(st: SpaceTime) -> Classification:
    """Heuristic label for a run.

    Order of checks: a level crossing moving at constant speed over the run
    (travelling pulse or front); a late window that is both spatially uniform
    and constant in time (steady); a late window in which every node
    oscillates in step around the same mean (homogeneous oscillation);
    otherwise Complex.
    """
    if len(st) < 10:
        raise ValueError("need at least 10 snapshots")
    x, t, V = st.x, st.t, st.V
    n_t = len(t)
    metrics: dict = {}

    trav = _travelling(st, V, t)
    if trav is not None:
        return Classification(trav[0], trav[1], {"r2": trav[1].r2})

    late = V[-max(2, n_t // 5):]
    spatial = float(late.var(axis=1).max())
    probes = [len(x) // 4, len(x) // 2, 3 * len(x) // 4]
    temporal = float(late[:, probes].var(axis=0).max())
    metrics.update(spatial_var=spatial, temporal_var=temporal)
    if spatial < SPATIAL_VAR_TOL and temporal < TEMPORAL_VAR_TOL:
        return Classification(Pattern.HOMOGENEOUS_STEADY, None, metrics)

    win = V[-max(2, (2 * n_t) // 5):]
    amp = win.max(axis=0) - win.min(axis=0)
    mid = 0.5 * (win.max(axis=0) + win.min(axis=0))
    ups = ((win[:-1] < mid) & (win[1:] >= mid)).sum(axis=0)
    spread = float(win.mean(axis=0).std() / max(amp.mean(), 1e-30))
    metrics.update(crossing_spread=int(ups.max() - ups.min()), mean_spread=spread,
                   amplitude=float(amp.mean()))
    if amp.mean() > 1e-3 and ups.min() >= 2 and ups.max() - ups.min() <= 1 and spread < OSC_MEAN_SPREAD:
        return Classification(Pattern.HOMOGENEOUS_OSCILLATION, None, metrics)

    # a front still moving at the end of the run
    late_trav = _travelling(st, V[n_t // 2:], t[n_t // 2:])
    if late_trav is not None:
        return Classification(late_trav[0], late_trav[1], metrics)
    return Classification(Pattern.COMPLEX, None, metrics)
