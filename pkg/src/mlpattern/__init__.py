"""Spatially extended Morris-Lecar model: bifurcations, Turing test, patterns and travelling waves."""

from .model import CellState, ConfigError, ModelParams

__version__ = "0.1.0"
__all__ = ["CellState", "ConfigError", "ModelParams"]
