"""
Travelling pulse and front: shooting against the PDE
====================================================

In the moving frame a pulse is an orbit homoclinic to the resting state and a
front is heteroclinic between the two stable states. Bisection on c finds the
speed; the PDE measures it from the position of the leading edge.
"""

from mlpattern.model import ModelParams
from mlpattern.pde import estimate_wave_speed
from mlpattern.recipes import PSI_FAMILY_V1, run_pattern
from mlpattern.singlecell import find_equilibria
from mlpattern.waves import find_wave_speed, wave_jacobian

for psi, kind in ((0.1, "pulse"), (0.5, "front")):
    p = ModelParams(v1=PSI_FAMILY_V1, psi=psi)
    eqs = find_equilibria(p)
    lo, hi = eqs[0], eqs[-1]
    print(f"\npsi={psi}: {kind}")
    print("  eigenvalues at rest, c=0.005:", wave_jacobian(lo, 0.005, p).eigenvalues.round(3))
    if kind == "pulse":
        orbit = find_wave_speed(lo, lo, p, (0.004, 0.008))
    else:
        orbit = find_wave_speed(hi, lo, p, (0.003, 0.006))
    print(f"  shooting c = {orbit.c:.6f}, closest return {orbit.closure_distance:.2e}")
    st = run_pattern(p, "gaussian", "lower", 500.0, n_per_unit=500)
    ws = estimate_wave_speed(st)
    print(f"  PDE speed  = {ws.speed:.6f} +/- {ws.stderr:.1e}")
