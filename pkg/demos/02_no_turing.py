"""
Diffusion cannot destabilise a resting state
============================================

For every stable homogeneous state the trace of the diffusive Jacobian only
decreases with k and the determinant only increases, so all growth rates stay
negative.
"""

import numpy as np

from mlpattern.model import ModelParams
from mlpattern.singlecell import find_equilibria
from mlpattern.turing import dispersion, turing_test

p = ModelParams(v1=-0.325)
eq = find_equilibria(p)[0]
d = dispersion(eq, p, k_max=200.0, n_k=9)
print(" k        T(k)        Delta(k)     max Re lambda")
for k, T, D, lp, lm in zip(d.k, d.trace, d.det, d.lam_plus, d.lam_minus):
    print(f"{k:5.0f}  {T:11.4g}  {D:11.4g}  {max(lp.real, lm.real):11.4g}")
print(turing_test(eq, p))

# a broader sample across the psi family
base = ModelParams(v1=-0.2465)
worst = -np.inf
count = 0
for psi in np.linspace(0.05, 0.6, 12):
    q = base.replace(psi=psi)
    for e in find_equilibria(q):
        if e.stable:
            worst = max(worst, turing_test(e, q).max_real)
            count += 1
print(f"\n{count} stable states in the psi family, largest growth rate {worst:.3g}")
