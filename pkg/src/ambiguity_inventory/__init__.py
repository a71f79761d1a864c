"""Inventory control under smooth ambiguity: Markov chain approximation solver,
free-boundary extraction and filtered-path simulation."""
from .errors import ConfigError, NumericalError
from .grid import Grid, GridSpec, RatioReport, build_grid, validate_ratio
from .model import FilterState, ModelParams

__all__ = [
    "ConfigError", "FilterState", "Grid", "GridSpec", "ModelParams", "NumericalError",
    "RatioReport", "build_grid", "validate_ratio",
]
