"""skewtherm: group-marked subshifts, pressures, convergence radii, twisted measures."""

__version__ = "0.1.0"

from .errors import (
    ArgumentError,
    BackendMismatch,
    BudgetExceeded,
    DivergenceGuard,
    DomainError,
    EstimationError,
    NonConvergence,
    SkewthermError,
)
from .groups import AbelianQuotient, FinitePermutation, FreeAbelian, FreeGroup, Marking
from .repspace import ConeVector, FiniteDensity, RepSpace, convolve, delta, inner, \
    matrix_coefficient, star, translate
from .shiftspace import ShiftSpec, Word, birkhoff_weight, count_words, enumerate_words, \
    first_return_sum, periodic_sum
from .systems import System

__all__ = [
    "ArgumentError",
    "BackendMismatch",
    "BudgetExceeded",
    "DivergenceGuard",
    "DomainError",
    "EstimationError",
    "NonConvergence",
    "SkewthermError",
    "AbelianQuotient",
    "FinitePermutation",
    "FreeAbelian",
    "FreeGroup",
    "Marking",
    "ConeVector",
    "FiniteDensity",
    "RepSpace",
    "convolve",
    "delta",
    "inner",
    "matrix_coefficient",
    "star",
    "translate",
    "ShiftSpec",
    "Word",
    "birkhoff_weight",
    "count_words",
    "enumerate_words",
    "first_return_sum",
    "periodic_sum",
    "System",
    "__version__",
]
