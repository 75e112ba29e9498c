"""
Single-cell dynamics: two routes to pacemaking
==============================================

Sweep v1 and v3 and look at how the oscillation period behaves where the
resting state loses stability. Near a saddle-node on the invariant circle the
period blows up; at a Hopf point it stays finite.
"""

import numpy as np

from mlpattern.model import CellState, ModelParams
from mlpattern.singlecell import find_equilibria, measure_limit_cycle, scan_bifurcations

p = ModelParams()

# equilibria at a few v1 values: one state, then three, then one again
for v1 in (-0.325, -0.25, -0.23, -0.2):
    eqs = find_equilibria(p.replace(v1=v1))
    print(f"v1={v1:+.3f}: " + ", ".join(f"V={e.state.V:.4f} ({e.stability.value})" for e in eqs))

# period as v1 approaches the fold from below (Type I)
print("\nperiod approaching the fold in v1")
for v1 in (-0.26, -0.252, -0.249, -0.2485):
    m = measure_limit_cycle(p.replace(v1=v1), CellState(-0.4, 0.3), t_transient=3000, t_measure=6000)
    print(f"  v1={v1:.4f}  period={m.period:9.2f}")

# the same quantity just past the first Hopf point in v3 (Type II)
print("\nperiod just past the first Hopf point in v3")
for v3 in (-0.30, -0.29, -0.28):
    m = measure_limit_cycle(p.replace(v3=v3), CellState(-0.4, 0.3))
    print(f"  v3={v3:.3f}  period={m.period:7.2f}  amplitude={m.amplitude:.3f}")

# the full scans, coarse so this runs in well under a minute
for name, span in (("v1", (-0.35, -0.2)), ("v3", (-0.4, -0.02))):
    scan = scan_bifurcations(p, name, span, 100)
    print(f"\n{name} scan events")
    for e in scan.events:
        print(f"  {e.param_value:+.5f}  {e.kind:10s} {e.evidence}")
