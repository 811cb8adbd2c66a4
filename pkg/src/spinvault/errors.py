"""Exception and warning types shared across the package."""

from __future__ import annotations


class SpinvaultError(Exception):
    """Base class for all package errors."""


class DomainError(SpinvaultError, ValueError):
    """An argument lies outside the domain of an operation."""


class NumericalError(SpinvaultError, ArithmeticError):
    """A computation produced non-finite values or failed to converge."""

    def __init__(self, message: str, index: int | None = None):
        super().__init__(message if index is None else f"{message} (first bad index {index})")
        self.index = index


class DivergenceError(NumericalError):
    """An integral required by a closed form does not converge."""


class UndefinedRatioError(SpinvaultError, ZeroDivisionError):
    """An efficiency ratio has a zero denominator."""


class ScenarioError(SpinvaultError, ValueError):
    """A scenario file failed to parse or validate."""


class ValidityWarning(UserWarning):
    """A formula or model is used outside the regime where it is accurate."""
