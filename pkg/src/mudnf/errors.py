"""Exception hierarchy shared by all modules.

The CLI maps each family to an exit status, so every failure raised by the
library should derive from :class:`MudnfError`.
"""

from __future__ import annotations


class MudnfError(Exception):
    """Base class for library errors."""


class PreconditionError(MudnfError, ValueError):
    """An input violates a documented precondition."""


class DomainError(MudnfError, ValueError):
    """A point lies outside the region where an object is defined."""

    def __init__(self, message: str, *, time: float | None = None):
        super().__init__(message)
        self.time = time


class InvariantError(MudnfError):
    """A structural invariant of an object failed numerically."""


class NumericalError(MudnfError, RuntimeError):
    """An integrator, quadrature or iteration did not converge."""

    def __init__(self, message: str, *, trace=None):
        super().__init__(message)
        self.trace = list(trace) if trace is not None else []


class InconclusiveError(MudnfError):
    """The sampled evidence does not decide the question asked."""

    def __init__(self, message: str, *, value=None, trend=None):
        super().__init__(message)
        self.value = value
        self.trend = trend


class WindowError(MudnfError):
    """The spectral search window does not contain the whole spectrum."""


class AdmissibilityDivergence(NumericalError):
    """Partial sums of an admissibility integral kept growing up to the cap."""


class BudgetError(MudnfError):
    """A combinatorial enumeration exceeds its configured cap."""


class VerificationError(MudnfError):
    """A post-condition check on a computed object failed."""

    def __init__(self, message: str, *, transcript=None, details=None):
        super().__init__(message)
        self.transcript = transcript
        self.details = details


class HypothesisViolation(PreconditionError):
    """A standing hypothesis (domination, nonresonance) fails on samples."""

    def __init__(self, message: str, *, violations=None):
        super().__init__(message)
        self.violations = list(violations or [])
