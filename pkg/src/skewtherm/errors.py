"""Exception types shared across the package."""

from __future__ import annotations


class SkewthermError(Exception):
    """Base class for all package errors."""


class ArgumentError(SkewthermError, ValueError):
    """A caller passed an out-of-contract argument (unknown letter, bad length, ...)."""


class DomainError(SkewthermError, ValueError):
    """Inputs are structurally valid but dynamically inadmissible (e.g. bad concatenation)."""


class BackendMismatch(SkewthermError, ValueError):
    """Two objects living over different group backends were combined."""


class BudgetExceeded(SkewthermError, RuntimeError):
    """A configurable memory/orbit/state budget was exhausted."""

    def __init__(self, what: str, used: int, budget: int):
        super().__init__(f"{what}: needed {used} > budget {budget}")
        self.what = what
        self.used = used
        self.budget = budget


class EstimationError(SkewthermError, RuntimeError):
    """An estimator had no usable data (all-zero window, too few coefficients)."""


class DivergenceGuard(SkewthermError, RuntimeError):
    """A series was requested at or below its estimated abscissa of convergence."""


class NonConvergence(SkewthermError, RuntimeError):
    """An iterative numerical method hit its iteration cap before the tolerance."""
