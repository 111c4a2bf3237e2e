"""Posterior exploration over simulation-ensemble surrogates.

A coordinate-network surrogate trained on an ensemble of simulated fields
stands in for the simulator; batched Hamiltonian Monte Carlo draws
parameter posteriors conditioned on user-selected field features, and the
results stream out progressively for interactive inspection.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    FormatError,
    IoError,
    NotFound,
    NumericalError,
    ParascopeError,
    RangeError,
    ShapeError,
    StateError,
    TrainingDiverged,
    ValidationError,
)

__all__ = [
    "ConfigError",
    "FormatError",
    "IoError",
    "NotFound",
    "NumericalError",
    "ParascopeError",
    "RangeError",
    "ShapeError",
    "StateError",
    "TrainingDiverged",
    "ValidationError",
    "__version__",
]
