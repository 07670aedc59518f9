"""Numerical laboratory for symbolic dynamics, Ruelle transfer operators and Anosov regularity."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ChartEscapeError,
    ConditioningError,
    ConfigError,
    InputError,
    LabError,
    ModelError,
    NumericalError,
    PrimitivityError,
    ResourceCapError,
)
