import mpmath as mp
import numpy as np
import pytest

from mlpattern.model import ModelParams, reaction
from mlpattern.singlecell import find_equilibria
from mlpattern.waves import (
    OrbitKind, WaveSearchError, cubic_coefficients, find_wave_speed, jacobian_matrix, shoot_once,
    wave_jacobian, wave_rhs,
)

PULSE = ModelParams(v1=-0.2465, psi=0.1)
FRONT = ModelParams(v1=-0.2465, psi=0.5)


def mp_wave_rhs(s, c, p, dps=40):
    with mp.workdps(dps):
        q = {k: mp.mpf(repr(v)) for k, v in p.as_dict().items()}
        V, W, N = (mp.mpf(repr(float(u))) for u in s)
        c = mp.mpf(repr(c))
        m = (1 + mp.tanh((V - q["v1"]) / q["v2"])) / 2
        n = (1 + mp.tanh((V - q["v3"]) / q["v4"])) / 2
        lam = q["psi"] * mp.cosh((V - q["v3"]) / (2 * q["v4"]))
        f = -q["gL"] * (V - q["vL"]) - q["gK"] * N * (V - q["vK"]) - q["gCa"] * m * (V - q["vCa"])
        g = lam * (n - N)
        return np.array([float(W), float(-(c * W + f) / q["D"]), float(-g / c)])


def test_wave_rhs_vanishes_at_equilibria():
    for e in find_equilibria(PULSE):
        r = wave_rhs([e.state.V, 0.0, e.state.N], 0.006, PULSE)
        assert np.max(np.abs(r)) < 1e-8 / PULSE.D


def test_wave_rhs_with_W_zero_is_reaction():
    V, N, c = -0.4, 0.2, 0.005
    f, g = reaction(V, N, PULSE)
    r = wave_rhs([V, 0.0, N], c, PULSE)
    assert r[0] == 0.0
    assert r[1] == pytest.approx(-f / PULSE.D, rel=1e-14)
    assert r[2] == pytest.approx(-g / c, rel=1e-14)


def test_wave_rhs_matches_high_precision():
    rng = np.random.default_rng(3)
    for _ in range(50):
        s = [rng.uniform(-1, 0.5), rng.uniform(-5, 5), rng.uniform(0, 1)]
        c = rng.uniform(1e-3, 1e-2)
        assert np.allclose(wave_rhs(s, c, PULSE), mp_wave_rhs(s, c, PULSE), rtol=1e-11, atol=1e-9)


def test_backward_rhs_is_negated():
    s = [-0.4, 1.0, 0.2]
    assert np.array_equal(wave_rhs(s, 0.005, PULSE, backward=True), -wave_rhs(s, 0.005, PULSE))


def test_wave_rhs_preconditions():
    with pytest.raises(ValueError):
        wave_rhs([0, 0, 0], 0.0, PULSE)
    with pytest.raises(ValueError):
        wave_rhs([0, 0, 0], 0.005, PULSE.replace(D=0.0))


def test_cubic_invariants():
    V, N, c = -0.5, 0.1, 0.006
    J = jacobian_matrix(V, N, c, PULSE)
    one, P2, P1, P0 = cubic_coefficients(V, N, c, PULSE)
    assert one == 1.0
    assert np.trace(J) == pytest.approx(-P2, rel=1e-12)
    assert np.linalg.det(J) == pytest.approx(-P0, rel=1e-9)


def test_cubic_roots_match_eigenvalues_on_random_pairs():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(100):
        p = PULSE.replace(psi=rng.uniform(0.05, 0.6))
        e = find_equilibria(p)[0]
        c = rng.uniform(1e-3, 2e-2)
        w = wave_jacobian(e, c, p)
        lam = w.eigenvalues
        scale = np.maximum(1.0, np.abs(lam) ** 3)
        worst = max(worst, float(np.max(np.abs(np.polyval(w.cubic, lam)) / scale)))
        assert w.cubic_residual < 1e-9
    assert worst < 1e-9


def test_lower_state_has_one_stable_direction():
    w = wave_jacobian(find_equilibria(PULSE)[0], 0.006, PULSE)
    assert (w.unstable_dim, w.stable_dim) == (2, 1)
    v = w.direction("stable")
    assert np.linalg.norm(w.jacobian @ v - w.eigenvalues[-1].real * v) < 1e-8 * abs(w.eigenvalues[-1])


def test_unseeded_shot_stays_at_equilibrium():
    e = find_equilibria(PULSE)[0]
    w = wave_jacobian(e, 0.006, PULSE)
    # the Newton residual is amplified at the strongest rate (about 65), so
    # keep the horizon short enough for that to stay below the tolerance
    shot = shoot_once(w, w.state, 0.006, PULSE, "backward", 1, seed_eps=0.0, zeta_max=0.1)
    assert not shot.escaped
    assert np.max(np.abs(shot.y - w.state)) < 1e-8


def test_far_off_speed_misses():
    e = find_equilibria(PULSE)[0]
    w = wave_jacobian(e, 0.03, PULSE)
    shots = [shoot_once(w, w.state, 0.03, PULSE, "backward", s) for s in (1, -1)]
    assert min(s.min_distance for s in shots) > 0.1


@pytest.fixture(scope="module")
def pulse():
    lo = find_equilibria(PULSE)[0]
    return find_wave_speed(lo, lo, PULSE, (0.004, 0.008))


@pytest.fixture(scope="module")
def front():
    eqs = find_equilibria(FRONT)
    return find_wave_speed(eqs[-1], eqs[0], FRONT, (0.003, 0.006))


def test_pulse_speed(pulse):
    assert pulse.kind is OrbitKind.HOMOCLINIC
    assert pulse.c == pytest.approx(0.006116, rel=0.05)
    # the return along the weak stable direction is limited by roundoff
    assert pulse.closure_distance < 1e-2
    assert np.ptp(pulse.V) > 0.5
    assert pulse.zeta[0] == 0 and np.all(np.diff(pulse.zeta) > 0)


def test_front_speed_and_closure(front):
    assert front.kind is OrbitKind.HETEROCLINIC
    assert front.c == pytest.approx(0.0043, rel=0.1)
    assert front.closed()
    lo, hi = find_equilibria(FRONT)[0], find_equilibria(FRONT)[-1]
    assert front.V[0] == pytest.approx(hi.state.V, abs=1e-4)
    assert front.V[-1] == pytest.approx(lo.state.V, abs=1e-3)


def test_no_connection_in_bracket():
    lo = find_equilibria(PULSE)[0]
    with pytest.raises(WaveSearchError) as exc:
        find_wave_speed(lo, lo, PULSE, (0.02, 0.04), n_scan=5)
    assert len(exc.value.table) >= 5
