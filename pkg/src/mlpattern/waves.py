"""Travelling waves by shooting in the co-moving frame.

With z = x - c t a wave profile solves

    V' = W,  W' = -(c W + f(V, N)) / D,  N' = -g(V, N) / c.

Pulses are homoclinic orbits of this system and fronts are heteroclinic
orbits. The resting state of interest has one stable and two unstable
directions, so an orbit arriving at it lies on a one-dimensional stable
manifold. We seed on that manifold and integrate backward in z, then bisect
on c using the side on which the shot leaves the neighbourhood of the other
end state.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import minimize_scalar

from .model import ModelParams, jacobian_cell, reaction
from .singlecell import Equilibrium, IntegrationError

SEED_EPS = 1e-6
SHOOT_TOL = 1e-3
C_TOL = 1e-6
ZETA_MAX = 5000.0
BOX = {"V": (-2.0, 1.5), "N": (-0.5, 1.5), "W": 50.0}
SHOOT_RTOL = 1e-11
SHOOT_ATOL = 1e-14
# a shot counts as "away" from its start once this far from it
DEPART_DIST = 0.1


def _check(c: float, p: ModelParams):
    if c == 0:
        raise ValueError("wave speed c must be nonzero")
    if not p.D > 0:
        raise ValueError("travelling waves need D > 0")


def wave_rhs(s, c: float, p: ModelParams, backward: bool = False) -> np.ndarray:
    """Right-hand side of the co-moving system at s = (V, W, N)."""
    _check(c, p)
    V, W, N = s
    f, g = reaction(V, N, p)
    out = np.array([W, -(c * W + f) / p.D, -g / c], dtype=float)
    return -out if backward else out


def _fast_rhs(c: float, p: ModelParams, sign: float):
    gL, gK, gCa, vL, vK, vCa = p.gL, p.gK, p.gCa, p.vL, p.vK, p.vCa
    v1, v2, v3, v4, psi, D = p.v1, p.v2, p.v3, p.v4, p.psi, p.D
    tanh, cosh = math.tanh, math.cosh

    def rhs(z, y):
        V, W, N = y
        f = -gL * (V - vL) - gK * N * (V - vK) - gCa * 0.5 * (1.0 + tanh((V - v1) / v2)) * (V - vCa)
        g = psi * cosh((V - v3) / (2.0 * v4)) * (0.5 * (1.0 + tanh((V - v3) / v4)) - N)
        return [sign * W, -sign * (c * W + f) / D, -sign * g / c]

    return rhs


def jacobian_matrix(V: float, N: float, c: float, p: ModelParams) -> np.ndarray:
    _check(c, p)
    (f_V, f_N), (g_V, g_N) = jacobian_cell(V, N, p)
    D = p.D
    return np.array([
        [0.0, 1.0, 0.0],
        [-f_V / D, -c / D, -f_N / D],
        [-g_V / c, 0.0, -g_N / c],
    ])


def cubic_coefficients(V: float, N: float, c: float, p: ModelParams) -> np.ndarray:
    """(1, P2, P1, P0) of the characteristic polynomial of the wave Jacobian."""
    _check(c, p)
    (f_V, f_N), (g_V, g_N) = jacobian_cell(V, N, p)
    D = p.D
    return np.array([
        1.0,
        (g_N * D + c**2) / (c * D),
        (g_N + f_V) / D,
        (f_V * g_N - f_N * g_V) / (c * D),
    ])


class EigenError(ArithmeticError):
    pass


@dataclass(frozen=True)
class WaveEquilibrium:
    cell: Equilibrium
    c: float
    jacobian: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray  # columns, unit norm
    cubic: np.ndarray
    cubic_residual: float

    @property
    def state(self) -> np.ndarray:
        return np.array([self.cell.state.V, 0.0, self.cell.state.N])

    @property
    def unstable_dim(self) -> int:
        return int(np.sum(self.eigenvalues.real > 0))

    @property
    def stable_dim(self) -> int:
        return int(np.sum(self.eigenvalues.real < 0))

    def direction(self, which: str) -> np.ndarray:
        """Unit eigenvector of the strongest real stable or unstable eigenvalue.

        This spans the strong (one-dimensional) invariant manifold, the only
        direction a shot can follow stably in floating point. The sign is
        fixed so that the V component is positive.
        """
        lam = self.eigenvalues
        pick = lam.real < 0 if which == "stable" else lam.real > 0
        idx = np.flatnonzero(pick & (np.abs(lam.imag) < 1e-12))
        if idx.size == 0 or np.abs(lam[pick]).max() > np.abs(lam[idx]).max():
            raise EigenError(f"no real dominant {which} eigenvalue, spectrum is {np.round(lam, 6)}")
        k = idx[np.argmax(np.abs(lam[idx].real))]
        v = np.real(self.eigenvectors[:, k])
        v = v / np.linalg.norm(v)
        return -v if v[0] < 0 else v


def wave_jacobian(eqm: Equilibrium, c: float, p: ModelParams) -> WaveEquilibrium:
    V, N = eqm.state
    J = jacobian_matrix(V, N, c, p)
    lam, vec = np.linalg.eig(J)
    order = np.argsort(-lam.real, kind="stable")
    lam, vec = lam[order], vec[:, order]
    scale = max(1.0, np.abs(lam).max())
    resid = np.linalg.norm(J @ vec - vec * lam, axis=0) / scale
    if resid.max() > 1e-8 or np.linalg.cond(vec) > 1e10:
        raise EigenError(
            f"eigen-decomposition is defective or inaccurate: residuals {resid}, "
            f"eigenvector condition {np.linalg.cond(vec):.3g}"
        )
    cubic = cubic_coefficients(V, N, c, p)
    cres = float(np.max(np.abs(np.polyval(cubic, lam)) / np.maximum(1.0, np.abs(lam) ** 3)))
    return WaveEquilibrium(eqm, c, J, lam, vec, cubic, cres)


# ---------------------------------------------------------------------------
# shooting


class Direction(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"


@dataclass
class Shot:
    c: float
    sign: int
    min_distance: float
    exit_side: int  # sign of V_end - V_goal when the shot leaves, 0 if it never did
    escaped: bool
    zeta: np.ndarray = field(repr=False)
    y: np.ndarray = field(repr=False)  # shape (n, 3)
    i_min: int = 0

    @property
    def final_state(self) -> np.ndarray:
        return self.y[-1]


def _escape_event(z, y):
    V, W, N = y
    (v0, v1), (n0, n1), w = BOX["V"], BOX["N"], BOX["W"]
    return min(V - v0, v1 - V, N - n0, n1 - N, w - abs(W))


_escape_event.terminal = True


def shoot_once(
    start: WaveEquilibrium,
    goal: np.ndarray,
    c: float,
    p: ModelParams,
    direction: Direction | str,
    sign: int,
    seed_eps: float = SEED_EPS,
    zeta_max: float = ZETA_MAX,
    rtol: float = SHOOT_RTOL,
    atol: float = SHOOT_ATOL,
) -> Shot:
    """One shot from ``start`` along its 1D manifold, seeded with the given sign."""
    direction = Direction(direction)
    c = float(c)
    which = "unstable" if direction is Direction.FORWARD else "stable"
    v = start.direction(which)
    y0 = start.state + sign * seed_eps * v
    rhs = _fast_rhs(c, p, 1.0 if direction is Direction.FORWARD else -1.0)
    sol = solve_ivp(rhs, (0.0, zeta_max), y0, method="DOP853", rtol=rtol, atol=atol,
                    events=_escape_event)
    if sol.status == -1:
        raise IntegrationError(sol.message, float(sol.t[-1]))
    y = sol.y.T
    d = np.linalg.norm(y - goal, axis=1)
    # for a homoclinic shot, ignore the start until the orbit has left
    if np.linalg.norm(goal - start.state) < DEPART_DIST:
        gone = np.flatnonzero(np.linalg.norm(y - start.state, axis=1) > DEPART_DIST)
        first = gone[0] if gone.size else len(d) - 1
    else:
        first = 0
    i_min = first + int(np.argmin(d[first:]))
    escaped = sol.status == 1
    side = int(np.sign(y[-1, 0] - goal[0])) if escaped else 0
    return Shot(c, sign, float(d[i_min]), side, escaped, sol.t, y, i_min)


def _pair(eq_from, eq_to, c, p, direction):
    direction = Direction(direction)
    wf = wave_jacobian(eq_from, c, p)
    wt = wave_jacobian(eq_to, c, p)
    if direction is Direction.FORWARD:
        return wf, wt.state
    return wt, wf.state


def shoot(
    eq_from: Equilibrium,
    eq_to: Equilibrium,
    c: float,
    p: ModelParams,
    direction: Direction | str = Direction.BACKWARD,
    **kw,
) -> Shot:
    """Best of the two seed signs.

    Forward shots leave ``eq_from`` along its unstable eigenvector and are
    measured against ``eq_to``. Backward shots leave ``eq_to`` along its
    stable eigenvector in reversed z and are measured against ``eq_from``.
    """
    start, goal = _pair(eq_from, eq_to, c, p, direction)
    shots = [shoot_once(start, goal, c, p, direction, s, **kw) for s in (1, -1)]
    return min(shots, key=lambda s: s.min_distance)


class OrbitKind(str, enum.Enum):
    HOMOCLINIC = "Homoclinic"
    HETEROCLINIC = "Heteroclinic"


@dataclass
class TravellingWaveOrbit:
    c: float
    zeta: np.ndarray
    V: np.ndarray
    W: np.ndarray
    N: np.ndarray
    kind: OrbitKind
    source: WaveEquilibrium
    target: WaveEquilibrium
    closure_distance: float
    bracket: tuple[float, float]
    scan: list = field(default_factory=list, repr=False)

    def closed(self, tol: float = SHOOT_TOL) -> bool:
        return self.closure_distance < tol


class WaveSearchError(RuntimeError):
    def __init__(self, message, table):
        self.table = table
        rows = "\n".join(f"  c={c:.6g} sign={s:+d} min_dist={d:.4g} exit={e:+d}" for c, s, d, e in table)
        super().__init__(f"{message}\n{rows}")


def _orbit(shot: Shot, direction: Direction, kind, source, target, bracket, scan):
    """Orbit in forward z, running from ``source`` to the closest approach of ``target``."""
    y = shot.y[: shot.i_min + 1]
    z = shot.zeta[: shot.i_min + 1]
    if direction is Direction.BACKWARD:
        y, z = y[::-1], -z[::-1]
    z = z - z[0]
    return TravellingWaveOrbit(
        shot.c, z, y[:, 0], y[:, 1], y[:, 2], kind, source, target,
        shot.min_distance, bracket, scan,
    )


def find_wave_speed(
    eq_from: Equilibrium,
    eq_to: Equilibrium,
    p: ModelParams,
    c_bracket: tuple[float, float],
    direction: Direction | str = Direction.BACKWARD,
    n_scan: int = 11,
    c_tol: float = C_TOL,
    polish: bool = True,
    **kw,
) -> TravellingWaveOrbit:
    """Bisect on c for a connection from ``eq_from`` to ``eq_to``.

    A coarse scan over ``c_bracket`` looks, for each seed sign, for adjacent
    speeds whose shots leave on opposite sides of the goal state. The first
    such pair is bisected down to ``c_tol``; with ``polish`` the bisection
    continues to floating-point resolution, which tightens the closure of
    homoclinic orbits. Without a sign change, a golden-section search on
    the minimum distance is tried around the best scan point.
    """
    direction = Direction(direction)
    lo, hi = sorted(c_bracket)
    if lo <= 0 <= hi:
        raise ValueError("c_bracket must not contain 0")
    homoclinic = math.hypot(eq_from.state.V - eq_to.state.V, eq_from.state.N - eq_to.state.N) < 1e-6
    kind = OrbitKind.HOMOCLINIC if homoclinic else OrbitKind.HETEROCLINIC

    def run(c, sign):
        start, goal = _pair(eq_from, eq_to, c, p, direction)
        return shoot_once(start, goal, c, p, direction, sign, **kw)

    cs = np.linspace(lo, hi, n_scan)
    table = []
    shots = {}
    for sign in (1, -1):
        shots[sign] = [run(c, sign) for c in cs]
        table += [(s.c, sign, s.min_distance, s.exit_side) for s in shots[sign]]

    candidates = []
    for sign in (1, -1):
        row = shots[sign]
        for a, b in zip(row[:-1], row[1:]):
            if a.exit_side and b.exit_side and a.exit_side != b.exit_side:
                candidates.append((min(a.min_distance, b.min_distance), sign, a, b))
                break

    best: Shot | None = None
    bracket = (lo, hi)
    if candidates:
        results = []
        for _, sign, a, b in candidates:
            ca, cb, side_a = a.c, b.c, a.exit_side
            top = a if a.min_distance < b.min_distance else b
            it = 0
            while True:
                if abs(cb - ca) < c_tol and not polish:
                    break
                m = 0.5 * (ca + cb)
                if m in (ca, cb) or it > 200:
                    break
                s = run(m, sign)
                it += 1
                if s.min_distance < top.min_distance:
                    top = s
                if s.exit_side == side_a:
                    ca = m
                elif s.exit_side == 0:
                    break  # landed on the connection
                else:
                    cb = m
            results.append((top, (min(ca, cb), max(ca, cb))))
        best, bracket = min(results, key=lambda r: r[0].min_distance)
    else:
        flat = [s for sign in (1, -1) for s in shots[sign]]
        k = min(range(len(flat)), key=lambda i: flat[i].min_distance)
        s0 = flat[k]
        i = int(np.argmin(np.abs(cs - s0.c)))
        a, b = cs[max(i - 1, 0)], cs[min(i + 1, len(cs) - 1)]
        if 0 < i < len(cs) - 1 and s0.min_distance < min(
            shots[s0.sign][i - 1].min_distance, shots[s0.sign][i + 1].min_distance
        ):
            res = minimize_scalar(lambda c: run(c, s0.sign).min_distance, bracket=(a, s0.c, b),
                                  method="golden", options={"xtol": c_tol / max(abs(s0.c), 1e-12)})
            best = run(float(res.x), s0.sign)
            bracket = (a, b)
            if best.min_distance > DEPART_DIST:
                best = None
    if best is None:
        raise WaveSearchError(
            f"no sign change or interior minimum of the shot objective on c in [{lo}, {hi}]", table
        )
    src = wave_jacobian(eq_from, best.c, p)
    tgt = wave_jacobian(eq_to, best.c, p)
    return _orbit(best, direction, kind, src, tgt, bracket, table)
