"""Exception hierarchy shared by every module of the package."""

from __future__ import annotations


class FracGronwallError(Exception):
    """Base class for all package errors."""


class DomainError(FracGronwallError, ValueError):
    """An argument lies outside the domain where the quantity is defined."""


class ConvergenceError(FracGronwallError, RuntimeError):
    """A series or iteration failed to meet its stopping rule in budget."""


class GridMismatchError(FracGronwallError, ValueError):
    """Two sampled objects do not live on the same time grid."""


class HypothesisError(FracGronwallError, ValueError):
    """Inputs violate the hypotheses required by a bound."""


class SingularStepError(FracGronwallError, ArithmeticError):
    """The implicit diagonal coefficient of a Volterra step is not positive."""

    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


class PathBlowUpError(FracGronwallError, ArithmeticError):
    """A simulated state became non-finite."""

    def __init__(self, message: str, node: int):
        super().__init__(message)
        self.node = node


class StabilityError(FracGronwallError, ValueError):
    """Explicit time step violates the CFL-style restriction."""


class MassDriftError(FracGronwallError, ArithmeticError):
    """Discrete density lost or gained mass beyond tolerance."""
