"""
Error types for ModelMix DP

Every failure the library raises derives from ModelMixError. The CLI maps
the two families onto its exit codes: contract violations exit 1, numerical
failures exit 2.
"""
from typing import Optional, Tuple


class ModelMixError(Exception):
    """Base class for all library errors."""


class ContractError(ModelMixError, ValueError):
    """A precondition or schema was violated by the caller."""


class DegenerateGradientError(ContractError):
    """Per-sample gradient deviations carry no tail to fit (all equal)."""


class NumericalFailureError(ModelMixError, ArithmeticError):
    """
    A numerical routine did not reach its accuracy target.

    Attributes:
        achieved_error: Best relative error estimate reached before giving up
    """

    def __init__(self, message: str, achieved_error: Optional[float] = None):
        super().__init__(message)
        self.achieved_error = achieved_error


class CalibrationError(NumericalFailureError):
    """Target epsilon cannot be reached inside the sigma bracket."""

    def __init__(self, message: str, bracket_epsilons: Optional[Tuple[float, float]] = None):
        super().__init__(message)
        self.bracket_epsilons = bracket_epsilons


EXIT_OK = 0
EXIT_CONTRACT = 1
EXIT_NUMERICAL = 2


def exit_code_for(exc: BaseException) -> int:
    """Map an exception onto the CLI exit code."""
    if isinstance(exc, NumericalFailureError):
        return EXIT_NUMERICAL
    return EXIT_CONTRACT
