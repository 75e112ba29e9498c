import numpy as np
import pytest
from scipy.integrate import solve_ivp

from mlpattern.model import CellState, ModelParams, reaction
from mlpattern.singlecell import (
    NEWTON_TOL, SNIC_PERIOD_THRESHOLD, IntegrationError, Stability, classify, find_equilibria,
    integrate_cell, measure_limit_cycle, scan_bifurcations,
)

P = ModelParams()
PSI_FAMILY = ModelParams(v1=-0.2465)


def radau(p, s0, t_end, t_eval=None):
    return solve_ivp(lambda t, y: reaction(y[0], y[1], p), (0, t_end), list(s0), method="Radau",
                     rtol=1e-10, atol=1e-12, t_eval=t_eval)


# ---------------------------------------------------------------------------
# equilibria


def test_three_equilibria_in_psi_family():
    eqs = find_equilibria(PSI_FAMILY.replace(psi=0.3))
    assert len(eqs) == 3
    assert [e.stability for e in eqs][:2] == [Stability.STABLE_NODE, Stability.SADDLE]
    assert not eqs[2].stable


def test_equilibria_do_not_depend_on_psi():
    a = find_equilibria(P.replace(psi=0.05))
    b = find_equilibria(P.replace(psi=0.6))
    assert len(a) == len(b) == 1
    assert np.allclose(a[0].state, b[0].state, atol=1e-12)


def test_unique_stable_equilibrium_at_low_v1():
    eqs = find_equilibria(P.replace(v1=-0.325))
    assert len(eqs) == 1 and eqs[0].stable


@pytest.mark.parametrize("v1", [-0.35, -0.3, -0.2813, -0.248, -0.23, -0.2])
def test_residuals_and_classification(v1):
    for e in find_equilibria(P.replace(v1=v1)):
        assert e.residual < NEWTON_TOL
        lam = e.eigenvalues
        det = np.linalg.det(e.jacobian)
        if det < 0:
            assert e.stability is Stability.SADDLE
        elif lam[0].real < 0:
            assert e.stable
        else:
            assert not e.stable
        assert (abs(lam[0].imag) > 0) == (e.stability in (Stability.STABLE_FOCUS, Stability.UNSTABLE_FOCUS))


def test_n_seeds_precondition():
    with pytest.raises(ValueError):
        find_equilibria(P, n_seeds=2)


def test_classify_simple_matrices():
    assert classify(np.array([[-1.0, 0], [0, -2.0]]))[1] is Stability.STABLE_NODE
    assert classify(np.array([[-1.0, 1], [-1, -1.0]]))[1] is Stability.STABLE_FOCUS
    assert classify(np.array([[1.0, 1], [-1, 1.0]]))[1] is Stability.UNSTABLE_FOCUS
    assert classify(np.array([[1.0, 0], [0, 2.0]]))[1] is Stability.UNSTABLE_NODE
    assert classify(np.array([[1.0, 0], [0, -2.0]]))[1] is Stability.SADDLE


@pytest.mark.parametrize("p", [P.replace(v1=-0.325), P.replace(v1=-0.23), PSI_FAMILY.replace(psi=0.5)])
def test_stability_agrees_with_integration(p):
    for e in find_equilibria(p):
        s0 = CellState(e.state.V + 1e-3, e.state.N)
        traj = integrate_cell(s0, p, 2000.0)
        d = np.hypot(traj.V - e.state.V, traj.N - e.state.N)
        if e.stable:
            assert d[-1] < 1e-4
        else:
            assert d.max() > 1e-2


# ---------------------------------------------------------------------------
# integration


def test_fixed_point_stays_put():
    e = find_equilibria(P.replace(v1=-0.325))[0]
    traj = integrate_cell(e.state, P.replace(v1=-0.325), 500.0)
    assert np.max(np.abs(traj.V - e.state.V)) < 10 * 1e-8
    assert np.max(np.abs(traj.N - e.state.N)) < 10 * 1e-8


@pytest.mark.parametrize("N0", [-0.3, 0.0, 1.0, 1.4])
def test_N_stays_in_sign_bounds(N0):
    traj = integrate_cell(CellState(-0.4, N0), P, 300.0)
    assert traj.N.min() >= min(N0, 0.0) - 1e-9
    assert traj.N.max() <= max(N0, 1.0) + 1e-9


def test_defaults_converge_to_oracle_attractor():
    # default parameters sit between the Hopf point and the fold: the only
    # equilibrium is an unstable focus and trajectories reach a cycle
    t = np.linspace(400, 500, 201)
    lib = integrate_cell(CellState(-0.4, 0.3), P, 500.0, t_eval=np.r_[0.0, t])
    ref = radau(P, (-0.4, 0.3), 500.0, t_eval=t)
    assert np.max(np.abs(lib.V[1:] - ref.y[0])) < 1e-4
    assert np.ptp(ref.y[0]) > 0.5


def test_integration_failure_reports_time():
    with pytest.raises(IntegrationError) as exc:
        integrate_cell(CellState(-0.4, 0.3), P, 100.0, rtol=1e-30, atol=1e-40)
    assert exc.value.t_reached >= 0


def test_integrate_rejects_bad_t_end():
    with pytest.raises(ValueError):
        integrate_cell(CellState(-0.4, 0.3), P, 0.0)


# ---------------------------------------------------------------------------
# limit cycles


def test_no_cycle_at_stable_equilibrium():
    p = P.replace(v1=-0.325)
    assert measure_limit_cycle(p, find_equilibria(p)[0].state) is None


def test_cycle_period_matches_oracle():
    # oracle: Radau at rtol 1e-11 with dense output, crossings refined by
    # root finding on the interpolant, mean over t in [1500, 3000]
    m = measure_limit_cycle(P.replace(v1=-0.265), CellState(-0.4, 0.3))
    assert m is not None
    assert m.period == pytest.approx(45.221433776, rel=1e-6)
    assert m.v_min == pytest.approx(-0.72873280, abs=1e-6)
    assert m.v_max == pytest.approx(-0.04686988, abs=1e-6)
    assert m.v_min < m.v_max and m.period > 0


def test_measure_preconditions():
    with pytest.raises(ValueError):
        measure_limit_cycle(P, CellState(-0.4, 0.3), t_transient=0.0)


# ---------------------------------------------------------------------------
# scans


@pytest.fixture(scope="module")
def v3_scan():
    return scan_bifurcations(P, "v3", (-0.40, -0.02), 100)


@pytest.fixture(scope="module")
def psi_scan():
    return scan_bifurcations(PSI_FAMILY, "psi", (0.05, 0.6), 100)


def test_scan_preconditions():
    with pytest.raises(ValueError):
        scan_bifurcations(P, "v1", (-0.3, -0.2), 99)
    with pytest.raises(ValueError):
        scan_bifurcations(P, "gK", (0, 1), 100)


def test_v3_two_hopf_type_II(v3_scan):
    hopf = v3_scan.events_of("Hopf")
    assert len(hopf) == 2
    first, second = hopf
    assert first.data["criticality"] == "supercritical"
    assert first.data["onset_period"] < SNIC_PERIOD_THRESHOLD
    assert second.data["criticality"] == "subcritical"
    assert set(v3_scan.equilibrium_counts()) == {1}


def test_events_sorted_and_hopf_imaginary(v3_scan, psi_scan):
    for scan in (v3_scan, psi_scan):
        vals = [e.param_value for e in scan.events]
        assert vals == sorted(vals)
        for e in scan.events_of("Hopf"):
            assert e.data["imag"] > 1e-8


def test_hopf_brackets_sign_change(v3_scan):
    for e in v3_scan.events_of("Hopf"):
        eq_lo = find_equilibria(P.replace(v3=e.param_value - 1e-4))[0]
        eq_hi = find_equilibria(P.replace(v3=e.param_value + 1e-4))[0]
        assert np.sign(eq_lo.eigenvalues[0].real) != np.sign(eq_hi.eigenvalues[0].real)


def test_psi_homoclinic_then_hopf_bistable(psi_scan):
    kinds = [e.kind for e in psi_scan.events if e.kind in ("Homoclinic", "Hopf")]
    assert kinds == ["Homoclinic", "Hopf"]
    hc = psi_scan.events_of("Homoclinic")[0].param_value
    hb = psi_scan.events_of("Hopf")[0].param_value
    assert hc < hb
    # between the two, a stable cycle coexists with the stable lower equilibrium
    inside = [m for m in psi_scan.cycles if hc < m.param_value < hb]
    assert inside
    for m in inside[:: max(1, len(inside) // 5)]:
        assert any(e.stable for e in find_equilibria(PSI_FAMILY.replace(psi=m.param_value)))


def test_parallel_scan_matches_serial():
    a = scan_bifurcations(P, "v1", (-0.3, -0.2), 100, cycles=False)
    b = scan_bifurcations(P, "v1", (-0.3, -0.2), 100, cycles=False, jobs=2)
    assert [e.kind for e in a.events] == [e.kind for e in b.events]
    assert np.array_equal(a.equilibrium_counts(), b.equilibrium_counts())
    assert all(np.allclose(x.equilibrium.state, y.equilibrium.state) for x, y in zip(a.points, b.points))
