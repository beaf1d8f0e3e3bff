"""Exception hierarchy shared by every pdbal module."""


class PDBALError(Exception):
    """Base class for all pdbal errors."""


class ContractViolation(PDBALError, ValueError):
    """An argument violates an operation's precondition."""


class DomainError(PDBALError, ValueError):
    """An argument lies outside the mathematical domain of the operation."""


class ImpossibleEvidenceError(PDBALError):
    """Every parameter assigns zero probability to an observation."""


class InitializationError(PDBALError):
    """A sampler could not be started from its initial state."""


class AssumptionError(PDBALError):
    """A finite model class does not satisfy a required structural assumption."""


class QuadratureError(PDBALError, ArithmeticError):
    """Numerical integration failed to reach the requested tolerance."""

    def __init__(self, message, *, estimate=None, error=None, panels=None):
        super().__init__(message)
        self.estimate = estimate
        self.error = error
        self.panels = panels


class SamplerFailure(PDBALError, RuntimeError):
    """A posterior sampler failed inside the active-learning loop."""
