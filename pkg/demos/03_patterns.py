"""
Spatiotemporal patterns on a line of coupled cells
==================================================

A Gaussian bump on top of a homogeneous state, run to t = 500 and labelled by
the pattern classifier. Coarser than the reproduction runs (200 nodes per unit
instead of 1000) so it finishes in a few seconds.
"""

from mlpattern.model import ModelParams
from mlpattern.pde import classify_pattern
from mlpattern.recipes import PSI_FAMILY_V1, run_pattern

p = ModelParams()
runs = [
    ("v1=-0.325", p.replace(v1=-0.325), "upper"),
    ("v1=-0.248", p.replace(v1=-0.248), "upper"),
    ("v3=-0.2813", p.replace(v3=-0.2813), "upper"),
    ("psi=0.1", p.replace(v1=PSI_FAMILY_V1, psi=0.1), "lower"),
    ("psi=0.5", p.replace(v1=PSI_FAMILY_V1, psi=0.5), "lower"),
]
for label, q, branch in runs:
    st = run_pattern(q, "gaussian", branch, 500.0, n_per_unit=200)
    c = classify_pattern(st)
    speed = f"  speed {c.wave.speed:.5f}" if c.wave else ""
    print(f"{label:12s} {c.pattern.value}{speed}")

# the same v1 value with a linear ramp instead of a bump
q = p.replace(v1=-0.248)
for ic in ("gaussian", "linear"):
    print(f"v1=-0.248 {ic:8s}", classify_pattern(run_pattern(q, ic, "upper", 500.0, n_per_unit=200)).pattern.value)
