"""Probabilists' Hermite polynomials.

Normalization: H_0 = 1, H_1(x) = x, H_{q+1}(x) = x H_q(x) - q H_{q-1}(x), so
H_2(x) = x^2 - 1 and E[H_p(N) H_q(N)] = q! 1{p = q} for N ~ N(0, 1).  These
are NOT the physicists' polynomials (``numpy.polynomial.hermite``); mixing
the two rescales every cumulant downstream.
"""
from __future__ import annotations

import math
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e

from ..exceptions import DomainError
from ..logging_config import get_logger

logger = get_logger(__name__)

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _check_degree(q: int) -> None:
    if q < 0:
        message = f"Hermite degree must be non-negative, got {q}"
        logger.error(message)
        raise DomainError(message)


def hermite_eval(q: int, x: float) -> float:
    """Return H_q(x) through the three-term recurrence."""
    _check_degree(q)
    x = float(x)
    prev, cur = 1.0, x
    if q == 0:
        return prev
    for k in range(1, q):
        prev, cur = cur, x * cur - k * prev
    return cur


def hermite_eval_batch(q: int, xs: np.ndarray) -> np.ndarray:
    """Elementwise :func:`hermite_eval`; same floating-point operations in the same order."""
    _check_degree(q)
    x = np.asarray(xs, dtype=np.float64)
    prev = np.ones_like(x)
    if q == 0:
        return prev
    cur = x.copy()
    for k in range(1, q):
        prev, cur = cur, x * cur - k * prev
    return cur


def hermite_derivative(q: int, x: float | np.ndarray) -> float | np.ndarray:
    """H'_q = q H_{q-1}."""
    _check_degree(q)
    if q == 0:
        return np.zeros_like(x) if isinstance(x, np.ndarray) else 0.0
    if isinstance(x, np.ndarray):
        return q * hermite_eval_batch(q - 1, x)
    return q * hermite_eval(q - 1, x)


@lru_cache(maxsize=16)
def gauss_hermite_nodes(degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and probability weights for the standard normal law."""
    nodes, weights = hermite_e.hermegauss(degree)
    return nodes, weights / _SQRT_2PI


def gaussian_expectation(g: Callable[[np.ndarray], np.ndarray], degree: int = 160) -> float:
    """E[g(N)] by Gauss-Hermite quadrature with ``degree`` nodes."""
    nodes, weights = gauss_hermite_nodes(degree)
    return float(np.dot(weights, g(nodes)))


__all__ = [
    "gauss_hermite_nodes",
    "gaussian_expectation",
    "hermite_derivative",
    "hermite_eval",
    "hermite_eval_batch",
]
