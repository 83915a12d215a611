"""Exception hierarchy shared by the services and the command line."""
from __future__ import annotations


class HermvarError(RuntimeError):
    """Base class for every error raised by the package."""


class DomainError(HermvarError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class UnsupportedArityError(DomainError):
    """Diagram enumeration was asked for a node count other than 2, 3 or 4."""


class OutOfRegimeError(DomainError):
    """The Hurst index lies outside the Breuer-Major CLT regime."""


class NotTabulatedError(DomainError):
    """No rate table exists for the requested statistic and degree."""


class VanishingStatisticError(DomainError):
    """The statistic is identically zero, so no rate exists."""


class ConfigError(HermvarError, ValueError):
    """The experiment configuration is invalid."""


class CapacityError(HermvarError):
    """A size cap was exceeded or too little data is available."""


class CovarianceError(HermvarError):
    """A covariance matrix is numerically not positive semi-definite."""


class ResolutionError(HermvarError):
    """A numerical estimate is not stable under grid refinement."""


class DiagramError(HermvarError):
    """The diagram weight self-check failed."""


__all__ = [
    "CapacityError",
    "ConfigError",
    "CovarianceError",
    "DiagramError",
    "DomainError",
    "HermvarError",
    "NotTabulatedError",
    "OutOfRegimeError",
    "ResolutionError",
    "UnsupportedArityError",
    "VanishingStatisticError",
]
