"""Nondimensional Morris-Lecar reaction terms and their derivatives.

All functions broadcast over numpy arrays, so the same code evaluates a
single cell and every node of a discretized field.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple

import numpy as np

__all__ = [
    "ModelParams",
    "CellState",
    "ConfigError",
    "m_inf",
    "n_inf",
    "lambda_rate",
    "reaction",
    "jacobian_cell",
    "CONFIG_KEYS",
    "DEFAULT_L",
    "parse_config",
    "load_config",
]


class ConfigError(ValueError):
    """Invalid parameter set; ``errors`` lists every violation found."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class ModelParams:
    v1: float = -0.2813
    v2: float = 0.3125
    v3: float = -0.1380
    v4: float = 0.1812
    psi: float = 0.1665
    gL: float = 0.25
    gK: float = 1.0
    gCa: float = 0.4997
    vL: float = -0.875
    vK: float = -1.125
    vCa: float = 1.0
    D: float = 0.0001

    def __post_init__(self):
        errors = self.violations()
        if errors:
            raise ConfigError(errors)

    def violations(self) -> list[str]:
        errors = []
        for f in dataclasses.fields(self):
            value = getattr(self, f.name)
            if not np.isfinite(value):
                errors.append(f"{f.name} must be finite (got {value!r})")
        if not self.psi > 0:
            errors.append(f"psi must be > 0 (got {self.psi})")
        if self.v2 == 0:
            errors.append("v2 must be nonzero")
        if self.v4 == 0:
            errors.append("v4 must be nonzero")
        if self.D < 0:
            errors.append(f"D must be >= 0 (got {self.D})")
        for name in ("gL", "gK", "gCa"):
            if getattr(self, name) < 0:
                errors.append(f"{name} must be >= 0 (got {getattr(self, name)})")
        return errors

    def replace(self, **changes) -> "ModelParams":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, float]:
        return dataclasses.asdict(self)


class CellState(NamedTuple):
    V: float
    N: float


def m_inf(V, p: ModelParams):
    """Steady-state fraction of open calcium channels."""
    return 0.5 * (1.0 + np.tanh((V - p.v1) / p.v2))


def n_inf(V, p: ModelParams):
    """Steady-state fraction of open potassium channels."""
    return 0.5 * (1.0 + np.tanh((V - p.v3) / p.v4))


def lambda_rate(V, p: ModelParams):
    """Voltage-dependent opening rate of the potassium channel."""
    return p.psi * np.cosh((V - p.v3) / (2.0 * p.v4))


def reaction(V, N, p: ModelParams):
    """Diffusion-free right-hand side ``(dV/dt, dN/dt)``.

    No clamping is applied to ``N``; callers that need N in [0, 1] check it.
    """
    dV = (
        -p.gL * (V - p.vL)
        - p.gK * N * (V - p.vK)
        - p.gCa * m_inf(V, p) * (V - p.vCa)
    )
    dN = lambda_rate(V, p) * (n_inf(V, p) - N)
    return dV, dN


def jacobian_cell(V, N, p: ModelParams) -> np.ndarray:
    """Closed-form partials ``[[f_V, f_N], [g_V, g_N]]``.

    For array input the result has shape ``(2, 2) + broadcast(V, N).shape``.
    """
    V = np.asarray(V, dtype=float)
    N = np.asarray(N, dtype=float)
    tm = np.tanh((V - p.v1) / p.v2)
    tn = np.tanh((V - p.v3) / p.v4)
    half = (V - p.v3) / (2.0 * p.v4)
    ch, sh = np.cosh(half), np.sinh(half)

    f_V = (
        -p.gL
        - p.gK * N
        - p.gCa / (2.0 * p.v2) * (1.0 - tm**2) * (V - p.vCa)
        - 0.5 * p.gCa * (1.0 + tm)
    )
    f_N = -p.gK * (V - p.vK) + 0.0 * N
    g_V = p.psi / (2.0 * p.v4) * (
        (0.5 * (1.0 + tn) - N) * sh + ch * (1.0 - tn**2)
    )
    g_N = -p.psi * ch + 0.0 * N
    return np.array([[f_V, f_N], [g_V, g_N]])


# ---------------------------------------------------------------------------
# plain-text configuration: ``key = value`` lines, no section header

DEFAULT_L = 1.0
CONFIG_KEYS = tuple(f.name for f in dataclasses.fields(ModelParams)) + ("L",)


def parse_config(text: str) -> tuple[ModelParams, float]:
    """Resolve a config text into ``(params, L)``.

    Missing keys fall back to defaults. All problems (unknown keys,
    unparsable numbers, invariant violations) are collected and raised
    together as one :class:`ConfigError`.
    """
    parser = configparser.ConfigParser(
        delimiters=("=",), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",)
    )
    parser.optionxform = str
    errors: list[str] = []
    try:
        parser.read_string("[config]\n" + text)
    except configparser.Error as exc:
        raise ConfigError([f"malformed config: {exc}"]) from exc

    values: dict[str, float] = {}
    for key, raw in parser["config"].items():
        if key not in CONFIG_KEYS:
            errors.append(f"unknown key {key!r} (allowed: {' '.join(CONFIG_KEYS)})")
            continue
        try:
            values[key] = float(raw)
        except ValueError:
            errors.append(f"{key}: cannot parse {raw!r} as a number")

    L = values.pop("L", DEFAULT_L)
    if not L > 0:
        errors.append(f"L must be > 0 (got {L})")

    candidate = None
    try:
        candidate = ModelParams(**values)
    except ConfigError as exc:
        errors.extend(exc.errors)
    if errors:
        raise ConfigError(errors)
    return candidate, L


def load_config(path: str | Path | None) -> tuple[ModelParams, float]:
    if path is None:
        return ModelParams(), DEFAULT_L
    return parse_config(Path(path).read_text())
