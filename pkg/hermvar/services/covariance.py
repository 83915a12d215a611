"""Fractional Gaussian noise correlations and the normalization of F_n."""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.special import binom

from ..exceptions import CapacityError, DomainError
from ..logging_config import get_logger
from ..models import VariationSpec
from ..utils import compensated_sum

logger = get_logger(__name__)

# Lags from here on use the binomial series of the second central difference.
_SERIES_MIN_LAG = 16
_SERIES_MAX_ORDER = 40


def _check_hurst(hurst: float) -> None:
    if not 0.0 < hurst < 1.0:
        message = f"Hurst index must lie in (0, 1), got {hurst}"
        logger.error(message)
        raise DomainError(message)


def _second_difference_series(two_h: float, lags: np.ndarray) -> np.ndarray:
    # rho(k) = sum_{m even >= 2} C(2H, m) k^(2H - m); summed smallest term first.
    total = np.zeros_like(lags)
    for order in range(_SERIES_MAX_ORDER, 1, -2):
        coeff = binom(two_h, order)
        if coeff != 0.0:
            total += coeff * lags ** (two_h - order)
    return total


def fgn_rho(hurst: float, k: int | np.ndarray) -> float | np.ndarray:
    """rho(k) = (|k+1|^{2H} - 2|k|^{2H} + |k-1|^{2H}) / 2, symmetric in k."""
    _check_hurst(hurst)
    lags = np.abs(np.asarray(k, dtype=np.float64))
    two_h = 2.0 * hurst
    out = np.empty_like(lags)
    small = lags < _SERIES_MIN_LAG
    near = lags[small]
    out[small] = 0.5 * (
        np.abs(near + 1.0) ** two_h - 2.0 * near**two_h + np.abs(near - 1.0) ** two_h
    )
    if not np.all(small):
        out[~small] = _second_difference_series(two_h, lags[~small])
    if out.ndim == 0:
        return float(out)
    return out


def rho_asymptotic(hurst: float, k: int | np.ndarray) -> float | np.ndarray:
    """Leading tail H(2H-1)|k|^{2H-2} of the fGn correlation."""
    _check_hurst(hurst)
    lags = np.abs(np.asarray(k, dtype=np.float64))
    out = hurst * (2.0 * hurst - 1.0) * lags ** (2.0 * hurst - 2.0)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=64)
def covariance_table(hurst: float, length: int) -> np.ndarray:
    """Read-only array (rho(0), ..., rho(length - 1)) for fGn, memoized per experiment."""
    table = np.asarray(fgn_rho(hurst, np.arange(length)), dtype=np.float64)
    table.setflags(write=False)
    return table


@runtime_checkable
class CovarianceSequence(Protocol):
    """Correlation function of a stationary standard Gaussian sequence."""

    def rho(self, k: int | np.ndarray) -> float | np.ndarray: ...

    def table(self, length: int) -> np.ndarray: ...


@dataclass(frozen=True)
class FgnCovariance:
    hurst: float

    def __post_init__(self) -> None:
        _check_hurst(self.hurst)

    def rho(self, k: int | np.ndarray) -> float | np.ndarray:
        return fgn_rho(self.hurst, k)

    def table(self, length: int) -> np.ndarray:
        return covariance_table(self.hurst, length)


@dataclass(frozen=True)
class TabulatedCovariance:
    """User-supplied correlations rho(0), rho(1), ...; rho(0) must equal 1.

    Positive-definiteness is not checked here; the sampler's embedding and
    Cholesky steps reject invalid tables.
    """

    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.values or not math.isclose(self.values[0], 1.0, abs_tol=1e-12):
            message = "a correlation table must start with rho(0) = 1"
            logger.error(message)
            raise DomainError(message)
        if any(abs(v) > 1.0 + 1e-12 for v in self.values):
            message = "correlations must lie in [-1, 1]"
            logger.error(message)
            raise DomainError(message)

    def rho(self, k: int | np.ndarray) -> float | np.ndarray:
        lags = np.abs(np.asarray(k, dtype=np.int64))
        if np.any(lags >= len(self.values)):
            message = f"lag {int(lags.max())} exceeds the supplied table of {len(self.values)}"
            logger.error(message)
            raise CapacityError(message)
        out = np.asarray(self.values, dtype=np.float64)[lags]
        return float(out) if out.ndim == 0 else out

    def table(self, length: int) -> np.ndarray:
        return np.asarray(self.rho(np.arange(length)), dtype=np.float64)


def variance_from_table(q: int, table: np.ndarray, n: int) -> float:
    """(q!/n) sum_{|k|<n} (n - |k|) rho(k)^q for a correlation table of length >= n."""
    lags = np.arange(1, n, dtype=np.float64)
    off_diagonal = (n - lags) * table[1:n] ** q
    return math.factorial(q) * compensated_sum([n, 2.0 * compensated_sum(off_diagonal)]) / n


def variance_norm(q: int, hurst: float, n: int) -> float:
    """v_n, the unique value making E[F_n^2] = 1."""
    if q < 2 or n < 1:
        message = f"variance_norm needs q >= 2 and n >= 1, got q={q}, n={n}"
        logger.error(message)
        raise DomainError(message)
    return variance_from_table(q, covariance_table(hurst, n), n)


def breuer_major_threshold(q: int) -> float:
    return 1.0 - 1.0 / (2.0 * q)


def in_clt_regime(q: int, hurst: float) -> bool:
    """True for 0 < H < 1 - 1/(2q), where the rate tables apply."""
    return 0.0 < hurst < breuer_major_threshold(q)


def build_spec(q: int, hurst: float, n: int) -> VariationSpec:
    """Validate (q, H, n) and attach v_n."""
    _check_hurst(hurst)
    if q < 2:
        message = f"statistics need a Hermite degree q >= 2, got {q}"
        logger.error(message)
        raise DomainError(message)
    if n < 1:
        message = f"sample size must be >= 1, got {n}"
        logger.error(message)
        raise DomainError(message)
    if not in_clt_regime(q, hurst):
        logger.warning(
            "H=%s is outside the CLT regime for q=%s (threshold %.4f); no distributional claims apply",
            hurst,
            q,
            breuer_major_threshold(q),
        )
    return VariationSpec(q=q, hurst=float(hurst), n=n, v_n=variance_norm(q, hurst, n))


__all__ = [
    "CovarianceSequence",
    "FgnCovariance",
    "TabulatedCovariance",
    "breuer_major_threshold",
    "build_spec",
    "covariance_table",
    "fgn_rho",
    "in_clt_regime",
    "rho_asymptotic",
    "variance_from_table",
    "variance_norm",
]
