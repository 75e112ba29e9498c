"""Linear stability of homogeneous steady states under diffusion.

A perturbation proportional to exp(lambda*t + i*k*x) of a homogeneous
equilibrium grows at rate lambda(k), a root of

    lambda**2 - T(k) lambda + Delta(k) = 0,
    T(k) = -k**2 D + f_V + g_N,
    Delta(k) = -k**2 D g_N + f_V g_N - g_V f_N.

Only V diffuses, so diffusion shifts T down and, because g_N < 0 for this
model, shifts Delta up. A stable equilibrium can therefore never be
destabilised by diffusion.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import ModelParams
from .singlecell import Equilibrium

K_MAX = 100.0
N_K = 2001


@dataclass(frozen=True)
class DispersionResult:
    k: np.ndarray
    lam_plus: np.ndarray
    lam_minus: np.ndarray
    trace: np.ndarray
    det: np.ndarray

    @property
    def growth_rates(self) -> np.ndarray:
        """Shape (n_k, 2) complex array of (lambda+, lambda-)."""
        return np.column_stack([self.lam_plus, self.lam_minus])

    @property
    def max_real(self) -> float:
        return float(max(self.lam_plus.real.max(), self.lam_minus.real.max()))

    def root_residual(self) -> float:
        res = [np.abs(lam**2 - self.trace * lam + self.det) for lam in (self.lam_plus, self.lam_minus)]
        return float(max(r.max() for r in res))


def _roots(T, Delta):
    disc = np.sqrt((T**2 - 4.0 * Delta).astype(complex))
    # avoid cancellation in the smaller root: lam+ * lam- = Delta
    big = 0.5 * (T + np.where(T >= 0, 1.0, -1.0) * disc)
    small = np.divide(Delta, big, out=np.zeros_like(big), where=big != 0)
    first = np.where(big.real >= small.real, big, small)
    second = np.where(big.real >= small.real, small, big)
    return first, second


def dispersion_at(jac: np.ndarray, D: float, k) -> DispersionResult:
    (f_V, f_N), (g_V, g_N) = jac
    k = np.asarray(k, dtype=float)
    T = -k**2 * D + f_V + g_N
    Delta = -k**2 * D * g_N + f_V * g_N - g_V * f_N
    lp, lm = _roots(T, Delta)
    return DispersionResult(k, lp, lm, T, Delta)


def dispersion(eq: Equilibrium, p: ModelParams, k_max: float = K_MAX, n_k: int = N_K) -> DispersionResult:
    """Growth rates on a uniform grid of continuous wavenumbers [0, k_max]."""
    if n_k < 2:
        raise ValueError("n_k must be >= 2")
    if not k_max > 0:
        raise ValueError("k_max must be positive")
    return dispersion_at(eq.jacobian, p.D, np.linspace(0.0, k_max, n_k))


def neumann_wavenumbers(L: float, k_max: float) -> np.ndarray:
    """Wavenumbers m*pi/(2L) admitted by no-flux boundaries on [-L, L]."""
    if not L > 0:
        raise ValueError("L must be positive")
    m = np.arange(0, int(np.floor(k_max * 2 * L / np.pi)) + 1)
    return m * np.pi / (2 * L)


class Verdict(str, enum.Enum):
    NO_TURING = "NoTuring"
    TURING_POSSIBLE = "TuringPossible"


@dataclass(frozen=True)
class TuringCertificate:
    verdict: Verdict
    trace0: float  # f_V + g_N
    det0: float  # f_V g_N - f_N g_V
    g_N: float
    D: float
    max_real: float  # sampled max Re lambda over the checked k range
    k_max: float

    def __str__(self):
        return (
            f"{self.verdict.value}: f_V+g_N={self.trace0:.6g} < 0, "
            f"f_V*g_N-f_N*g_V={self.det0:.6g} > 0, g_N={self.g_N:.6g} < 0, D={self.D:g}; "
            f"max Re lambda on [0, {self.k_max:g}] = {self.max_real:.6g}"
        )


class UnstableEquilibriumError(ValueError):
    pass


def turing_test(eq: Equilibrium, p: ModelParams, k_max: float = 1000.0, n_k: int = 20001) -> TuringCertificate:
    """Check that diffusion cannot destabilise a stable equilibrium.

    With g_N < 0 and D >= 0, T(k) <= T(0) < 0 and Delta(k) >= Delta(0) > 0
    for every k, so both growth rates keep negative real part. The sampled
    dispersion relation is evaluated as a cross-check.
    """
    (f_V, f_N), (g_V, g_N) = eq.jacobian
    trace0 = f_V + g_N
    det0 = f_V * g_N - f_N * g_V
    if not (trace0 < 0 and det0 > 0):
        raise UnstableEquilibriumError(
            f"equilibrium at V={eq.state.V:.6g} is not stable without diffusion "
            f"(f_V+g_N={trace0:.3g}, det={det0:.3g})"
        )
    disp = dispersion(eq, p, k_max, n_k)
    analytic_ok = g_N < 0 and p.D >= 0
    sampled_ok = disp.max_real < 0
    verdict = Verdict.NO_TURING if analytic_ok and sampled_ok else Verdict.TURING_POSSIBLE
    return TuringCertificate(verdict, float(trace0), float(det0), float(g_N), p.D, disp.max_real, k_max)
