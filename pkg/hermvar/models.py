"""Dataclasses and type helpers used across the project."""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Any, Iterator

import numpy as np


@dataclass(frozen=True)
class VariationSpec:
    """The triple (q, H, n) defining F_n together with its normalization v_n."""

    q: int
    hurst: float
    n: int
    v_n: float

    @property
    def label(self) -> str:
        return f"q{self.q}_H{self.hurst:g}_n{self.n}"

    def as_dict(self) -> dict[str, Any]:
        return {"q": self.q, "H": self.hurst, "n": self.n, "v_n": self.v_n}


@dataclass(frozen=True)
class Diagram:
    """One Wick contraction pattern among ``m`` Hermite nodes.

    ``edges`` is the symmetric multiplicity matrix (zero diagonal, every row
    summing to the Hermite degree).
    """

    m: int
    edges: tuple[tuple[int, ...], ...]
    weight: int
    connected: bool

    @property
    def q(self) -> int:
        return sum(self.edges[0])

    def pairs(self) -> Iterator[tuple[int, int, int]]:
        """Yield ``(i, j, multiplicity)`` for every node pair with i < j."""
        for i in range(self.m):
            for j in range(i + 1, self.m):
                yield i, j, self.edges[i][j]

    def canonical_key(self) -> tuple[int, ...]:
        """Smallest upper-triangle reading over all relabelings of the nodes."""
        best: tuple[int, ...] | None = None
        for perm in itertools.permutations(range(self.m)):
            key = tuple(
                self.edges[perm[i]][perm[j]]
                for i in range(self.m)
                for j in range(i + 1, self.m)
            )
            if best is None or key < best:
                best = key
        assert best is not None
        return best


@dataclass(frozen=True)
class Estimate:
    value: float
    uncertainty: float

    def as_dict(self) -> dict[str, float]:
        return {"value": self.value, "uncertainty": self.uncertainty}


@dataclass(frozen=True)
class CumulantReport:
    """Cumulants of F_n and the rate statistic M = max(|kappa3|, kappa4).

    ``source`` is ``"exact"`` for diagram sums and ``"sampled"`` for
    k-statistics, in which case the standard errors are non-zero.
    """

    spec: VariationSpec
    kappa2: float
    kappa3: float
    kappa4: float
    m_stat: float
    source: str = "exact"
    kappa3_se: float = 0.0
    kappa4_se: float = 0.0

    def as_dict(self) -> dict[str, Any]:
        return {
            **self.spec.as_dict(),
            "kappa2": self.kappa2,
            "kappa3": self.kappa3,
            "kappa4": self.kappa4,
            "m_stat": self.m_stat,
            "source": self.source,
            "kappa3_se": self.kappa3_se,
            "kappa4_se": self.kappa4_se,
        }


@dataclass(frozen=True)
class SampleBatch:
    """Monte Carlo replicates of F_n (or of a reference law when ``spec`` is None)."""

    spec: VariationSpec | None
    replicates: np.ndarray
    seed: int
    count: int

    def __post_init__(self) -> None:
        if self.count != len(self.replicates):
            raise ValueError(
                f"count={self.count} does not match {len(self.replicates)} replicates"
            )
        if not np.all(np.isfinite(self.replicates)):
            raise ValueError("sample batch contains non-finite values")


@dataclass(frozen=True)
class DistanceReport:
    spec: VariationSpec | None
    tv_density: Estimate
    kolmogorov: Estimate
    sin_gap: Estimate
    cos_gap: Estimate
    tv_lower_trig: float
    fmt_upper: float
    fmt_upper_simple: float
    sandwich_ratio: float
    method: str = "kde"
    count: int = 0
    bias_allowance: float = 0.01

    def as_dict(self) -> dict[str, Any]:
        return {
            "spec": self.spec.as_dict() if self.spec else None,
            "tv_density": self.tv_density.as_dict(),
            "kolmogorov": self.kolmogorov.as_dict(),
            "sin_gap": self.sin_gap.as_dict(),
            "cos_gap": self.cos_gap.as_dict(),
            "tv_lower_trig": self.tv_lower_trig,
            "fmt_upper": self.fmt_upper,
            "fmt_upper_simple": self.fmt_upper_simple,
            "sandwich_ratio": self.sandwich_ratio,
            "method": self.method,
            "count": self.count,
            "bias_allowance": self.bias_allowance,
        }


@dataclass(frozen=True)
class SteinSolution:
    grid: np.ndarray
    values: np.ndarray
    derivative: np.ndarray
    g_norm: float
    mean: float


@dataclass(frozen=True)
class RateFit:
    statistic: str
    q: int
    hurst: float
    n_grid: tuple[int, ...]
    fitted_exponent: float
    stderr: float
    theoretical_exponent: float | None
    log_power: int
    regime_label: str
    used_points: int = 0
    trimmed: bool = False

    @property
    def discrepancy(self) -> float | None:
        if self.theoretical_exponent is None:
            return None
        return abs(self.fitted_exponent - self.theoretical_exponent)


@dataclass(frozen=True)
class SandwichRecord:
    spec: VariationSpec
    m_stat: float
    tv_estimate: float
    ratio: float


@dataclass
class GridResult:
    """Everything :func:`hermvar.services.rates.run_grid` produces."""

    cumulants: list[CumulantReport] = field(default_factory=list)
    distances: list[DistanceReport] = field(default_factory=list)
    fits: list[RateFit] = field(default_factory=list)
    sandwich: list[SandwichRecord] = field(default_factory=list)
    failures: list[dict[str, str]] = field(default_factory=list)
    flags: dict[str, Any] = field(default_factory=dict)


__all__ = [
    "CumulantReport",
    "Diagram",
    "DistanceReport",
    "Estimate",
    "GridResult",
    "RateFit",
    "SampleBatch",
    "SandwichRecord",
    "SteinSolution",
    "VariationSpec",
]
