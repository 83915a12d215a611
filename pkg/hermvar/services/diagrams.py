"""Wick-diagram moments of Hermite products and exact cumulants of F_n.

For jointly standard Gaussian X_1..X_m with correlations r_ij,

    E[prod_i H_q(X_i)] = sum_D weight(D) prod_{i<j} r_ij^{e_ij(D)}

over all multigraphs D on m nodes with zero diagonal and every degree equal
to q.  The joint cumulant keeps the connected diagrams only.  For F_n the
correlations are rho(a - b), so each diagram contributes a lattice sum over
node positions in {0..n-1}; translation invariance reduces it to a sum over
offsets (0, i, j, l) weighted by the number of admissible translates.
"""
from __future__ import annotations

import math
import time
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

import numpy as np
from scipy.linalg import toeplitz
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from ..config import EXACT_N_CAP
from ..exceptions import CapacityError, DiagramError, DomainError, UnsupportedArityError
from ..logging_config import get_logger
from ..models import CumulantReport, Diagram, VariationSpec
from ..utils import compensated_sum
from .covariance import covariance_table

logger = get_logger(__name__)

SUPPORTED_ARITIES = (2, 3, 4)
# kappa3 needs O(n^2) work only, so it has a far larger cap than kappa4.
KAPPA3_N_CAP = 1 << 15
# Rows of the outer offset index handled by one worker task.
_ROWS_PER_TASK = 64


def _diagram_weight(edges: np.ndarray, q: int) -> int:
    m = edges.shape[0]
    weight = 1
    for i in range(m):
        weight *= math.factorial(q) // math.prod(
            math.factorial(int(edges[i, j])) for j in range(m) if j != i
        )
    for i in range(m):
        for j in range(i + 1, m):
            weight *= math.factorial(int(edges[i, j]))
    return weight


def _is_connected(edges: np.ndarray) -> bool:
    count, _ = connected_components(csr_matrix(edges > 0), directed=False)
    return count == 1


def _upper_triangles(m: int, q: int) -> list[tuple[int, ...]]:
    """All (e_01, e_02, ..., e_{m-2,m-1}) with every node degree equal to q."""
    if m == 2:
        return [(q,)]
    if m == 3:
        if q % 2:
            return []
        half = q // 2
        return [(half, half, half)]
    solutions: list[tuple[int, ...]] = []
    for e01 in range(q + 1):
        for e02 in range(q - e01 + 1):
            e03 = q - e01 - e02
            # Degrees of nodes 1, 2, 3 fix the remaining three edges.
            twice_e12 = (q - e01) + (q - e02) - (q - e03)
            if twice_e12 < 0 or twice_e12 % 2:
                continue
            e12 = twice_e12 // 2
            e13 = (q - e01) - e12
            e23 = (q - e02) - e12
            if e13 < 0 or e23 < 0 or e13 + e23 != q - e03:
                continue
            solutions.append((e01, e02, e03, e12, e13, e23))
    return solutions


@lru_cache(maxsize=64)
def _enumerate(m: int, q: int) -> tuple[Diagram, ...]:
    diagrams = []
    iu = np.triu_indices(m, k=1)
    for upper in _upper_triangles(m, q):
        edges = np.zeros((m, m), dtype=np.int64)
        edges[iu] = upper
        edges = edges + edges.T
        diagrams.append(
            Diagram(
                m=m,
                edges=tuple(tuple(int(v) for v in row) for row in edges),
                weight=_diagram_weight(edges, q),
                connected=_is_connected(edges),
            )
        )
    return tuple(diagrams)


def enumerate_diagrams(m: int, q: int, connected_only: bool = False) -> list[Diagram]:
    """All Wick diagrams on ``m`` nodes of degree ``q``, in lexicographic edge order."""
    if m not in SUPPORTED_ARITIES:
        message = f"diagram enumeration supports m in {SUPPORTED_ARITIES}, got {m}"
        logger.error(message)
        raise UnsupportedArityError(message)
    if q < 1:
        message = f"Hermite degree must be >= 1 for diagrams, got {q}"
        logger.error(message)
        raise DomainError(message)
    diagrams = _enumerate(m, q)
    if connected_only:
        return [d for d in diagrams if d.connected]
    return list(diagrams)


@lru_cache(maxsize=1)
def validate_weight_formula() -> None:
    """Fail fast if the weight formula disagrees with the hand-counted q = 2 cases."""
    expected = {
        (2, True): [2],
        (3, True): [8],
        (4, True): [16, 16, 16],
        (4, False): [4, 4, 4],
    }
    for (m, connected), weights in expected.items():
        found = sorted(d.weight for d in _enumerate(m, 2) if d.connected == connected)
        if found != weights:
            message = f"diagram weights for m={m}, q=2 are {found}, expected {weights}"
            logger.critical(message)
            raise DiagramError(message)
    logger.debug("Diagram weight formula validated against q=2 cases")


def joint_hermite_moment(q: int, rho: np.ndarray) -> float:
    """E[prod_i H_q(X_i)] for jointly standard Gaussians with correlation matrix ``rho``."""
    corr = np.asarray(rho, dtype=np.float64)
    if corr.ndim != 2 or corr.shape[0] != corr.shape[1]:
        message = f"correlation matrix must be square, got shape {corr.shape}"
        logger.error(message)
        raise DomainError(message)
    if not np.allclose(corr, corr.T, rtol=0.0, atol=1e-12):
        message = "correlation matrix must be symmetric"
        logger.error(message)
        raise DomainError(message)
    if not np.allclose(np.diag(corr), 1.0, rtol=0.0, atol=1e-12):
        message = "correlation matrix must have a unit diagonal"
        logger.error(message)
        raise DomainError(message)
    if np.any(np.abs(corr) > 1.0 + 1e-12):
        message = "correlations must lie in [-1, 1]"
        logger.error(message)
        raise DomainError(message)

    terms = []
    for diagram in enumerate_diagrams(corr.shape[0], q):
        term = float(diagram.weight)
        for i, j, mult in diagram.pairs():
            term *= corr[i, j] ** mult
        terms.append(term)
    return compensated_sum(terms)


class _OffsetLattice:
    """Correlation powers on the offset lattice {-(n-1), ..., n-1} for one n."""

    def __init__(self, table: np.ndarray, n: int) -> None:
        self.n = n
        self.size = 2 * n - 1
        lags = np.arange(-(2 * n - 2), 2 * n - 1)
        self._rho = np.asarray(table, dtype=np.float64)[np.abs(lags)]
        self._powers: dict[int, np.ndarray] = {}
        self._toeplitz: dict[int, np.ndarray] = {}

    def power(self, exponent: int) -> np.ndarray:
        """rho(d)^e for d in [-(2n-2), 2n-2], indexed by d + 2n - 2."""
        if exponent not in self._powers:
            self._powers[exponent] = self._rho**exponent
        return self._powers[exponent]

    def shifted(self, exponent: int, shift: int, lo: int, hi: int) -> np.ndarray:
        """rho(o - shift)^e for offsets o in [lo, hi]."""
        base = 2 * self.n - 2 - shift
        return self.power(exponent)[base + lo : base + hi + 1]

    def difference_matrix(self, exponent: int) -> np.ndarray:
        """rho(l - j)^e for offsets j (rows) and l (columns)."""
        if exponent not in self._toeplitz:
            column = self.power(exponent)[2 * self.n - 2 : 2 * self.n - 2 + self.size]
            self._toeplitz[exponent] = toeplitz(column)
        return self._toeplitz[exponent]

    def window(self, shift: int) -> tuple[int, int]:
        """Offsets o with both |o| and |o - shift| at most n - 1."""
        return max(0, shift) - (self.n - 1), min(0, shift) + (self.n - 1)


def _rows_m2(lattice: _OffsetLattice, reps: Sequence[Diagram], rows: range) -> list[list[float]]:
    n = lattice.n
    out = []
    for i in rows:
        count = n - abs(i)
        out.append([count * float(lattice.shifted(d.edges[0][1], 0, i, i)[0]) for d in reps])
    return out


def _rows_m3(lattice: _OffsetLattice, reps: Sequence[Diagram], rows: range) -> list[list[float]]:
    n = lattice.n
    out = []
    for i in rows:
        lo, hi = lattice.window(i)
        j = np.arange(lo, hi + 1)
        count = n - (np.maximum(np.maximum(j, i), 0) - np.minimum(np.minimum(j, i), 0))
        partial = []
        for d in reps:
            e01, e02, e12 = d.edges[0][1], d.edges[0][2], d.edges[1][2]
            scalar = float(lattice.shifted(e01, 0, i, i)[0])
            vec = lattice.shifted(e02, 0, lo, hi) * lattice.shifted(e12, i, lo, hi)
            partial.append(scalar * float(np.dot(count, vec)))
        out.append(partial)
    return out


def _rows_m4(lattice: _OffsetLattice, reps: Sequence[Diagram], rows: range) -> list[list[float]]:
    n = lattice.n
    out = []
    for i in rows:
        lo, hi = lattice.window(i)
        offsets = np.arange(lo, hi + 1)
        sl = slice(lo + n - 1, hi + n)
        top = np.maximum(np.maximum.outer(offsets, offsets), max(0, i))
        bottom = np.minimum(np.minimum.outer(offsets, offsets), min(0, i))
        count = np.clip(n - (top - bottom), 0, None).astype(np.float64)
        partial = []
        for d in reps:
            e = d.edges
            scalar = float(lattice.shifted(e[0][1], 0, i, i)[0])
            left = lattice.shifted(e[0][2], 0, lo, hi) * lattice.shifted(e[1][2], i, lo, hi)
            right = lattice.shifted(e[0][3], 0, lo, hi) * lattice.shifted(e[1][3], i, lo, hi)
            inner = count * lattice.difference_matrix(e[2][3])[sl, sl]
            partial.append(scalar * float(left @ (inner @ right)))
        out.append(partial)
    return out


_ROW_KERNELS = {2: _rows_m2, 3: _rows_m3, 4: _rows_m4}


def lattice_sums(
    diagrams: Sequence[Diagram], table: np.ndarray, n: int, jobs: int = 1
) -> list[float]:
    """Sum_{a_1..a_m in [0, n)} prod_{i<j} rho(a_i - a_j)^{e_ij} for each diagram.

    ``table`` must hold rho(0), ..., rho(2n - 2).  Isomorphic diagrams share
    one evaluation.  Partial sums per outer offset are combined in offset
    order with compensated summation, so the result does not depend on
    ``jobs``.
    """
    if not diagrams:
        return []
    if len(table) < 2 * n - 1:
        message = f"lattice sums for n={n} need {2 * n - 1} correlations, got {len(table)}"
        logger.error(message)
        raise CapacityError(message)

    m = diagrams[0].m
    classes: dict[tuple[int, ...], Diagram] = {}
    for diagram in diagrams:
        classes.setdefault(diagram.canonical_key(), diagram)
    keys = list(classes)
    reps = [classes[key] for key in keys]

    # Fill every cache before worker threads start reading it.
    lattice = _OffsetLattice(table, n)
    for d in reps:
        for _, _, mult in d.pairs():
            lattice.power(mult)
        if m == 4:
            lattice.difference_matrix(d.edges[2][3])
    kernel = _ROW_KERNELS[m]
    all_rows = range(-(n - 1), n)
    chunks = [
        all_rows[start : start + _ROWS_PER_TASK]
        for start in range(0, len(all_rows), _ROWS_PER_TASK)
    ]

    if jobs > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(lambda rows: kernel(lattice, reps, rows), chunks))
    else:
        results = [kernel(lattice, reps, rows) for rows in chunks]

    rows_flat = [row for chunk in results for row in chunk]
    sums = {key: compensated_sum(row[idx] for row in rows_flat) for idx, key in enumerate(keys)}
    return [sums[d.canonical_key()] for d in diagrams]


def lattice_sum(diagram: Diagram, table: np.ndarray, n: int, jobs: int = 1) -> float:
    """Single-diagram form of :func:`lattice_sums`."""
    return lattice_sums([diagram], table, n, jobs=jobs)[0]


@lru_cache(maxsize=128)
def _weighted_sums(q: int, hurst: float, n: int, m: int, jobs: int) -> tuple[float, float]:
    """(connected, disconnected) weighted lattice sums of all m-node diagrams."""
    diagrams = enumerate_diagrams(m, q)
    if not diagrams:
        return 0.0, 0.0
    table = covariance_table(hurst, 2 * n - 1)
    sums = lattice_sums(diagrams, table, n, jobs=jobs)
    connected = compensated_sum(d.weight * s for d, s in zip(diagrams, sums) if d.connected)
    disconnected = compensated_sum(
        d.weight * s for d, s in zip(diagrams, sums) if not d.connected
    )
    return connected, disconnected


def _check_cap(spec: VariationSpec, cap: int) -> None:
    if spec.n > cap:
        message = (
            f"n={spec.n} exceeds the exact-computation cap {cap}; "
            "use sampled cumulants (sampler.sample_cumulants) instead"
        )
        logger.error(message)
        raise CapacityError(message)


def exact_kappa3(spec: VariationSpec, jobs: int = 1) -> float:
    """kappa3(F_n) from the O(n^2) reduced triangle sum; exactly 0 for odd q."""
    _check_cap(spec, KAPPA3_N_CAP)
    validate_weight_formula()
    if spec.q % 2:
        return 0.0
    connected, _ = _weighted_sums(spec.q, spec.hurst, spec.n, 3, jobs)
    return connected / (spec.n * spec.v_n) ** 1.5


def exact_cumulants(
    spec: VariationSpec, exact_n_cap: int = EXACT_N_CAP, jobs: int = 1
) -> CumulantReport:
    """Exact kappa2, kappa3, kappa4 of F_n and M = max(|kappa3|, kappa4)."""
    _check_cap(spec, exact_n_cap)
    validate_weight_formula()
    start_time = time.time()
    logger.info("Computing exact cumulants for %s", spec.label)

    norm = spec.n * spec.v_n
    kappa2 = _weighted_sums(spec.q, spec.hurst, spec.n, 2, jobs)[0] / norm
    kappa3 = exact_kappa3(spec, jobs=jobs)
    kappa4 = _weighted_sums(spec.q, spec.hurst, spec.n, 4, jobs)[0] / norm**2

    elapsed_time = time.time() - start_time
    logger.info(
        "Exact cumulants for %s completed in %.2f seconds: kappa3=%.6g kappa4=%.6g",
        spec.label,
        elapsed_time,
        kappa3,
        kappa4,
    )
    if kappa4 <= 0.0:
        logger.warning("Non-positive kappa4=%.3g for %s", kappa4, spec.label)
    return CumulantReport(
        spec=spec,
        kappa2=kappa2,
        kappa3=kappa3,
        kappa4=kappa4,
        m_stat=max(abs(kappa3), kappa4),
    )


def moment4_all_diagrams(
    spec: VariationSpec, exact_n_cap: int = EXACT_N_CAP, jobs: int = 1
) -> float:
    """E[F_n^4] from every four-node diagram, connected or not."""
    _check_cap(spec, exact_n_cap)
    validate_weight_formula()
    connected, disconnected = _weighted_sums(spec.q, spec.hurst, spec.n, 4, jobs)
    return compensated_sum([connected, disconnected]) / (spec.n * spec.v_n) ** 2


def direct_kappa3(spec: VariationSpec) -> float:
    """kappa3(F_n) from the unreduced triple sum over positions (O(n^3))."""
    if spec.q % 2:
        return 0.0
    (triangle,) = enumerate_diagrams(3, spec.q)
    half = spec.q // 2
    corr = toeplitz(covariance_table(spec.hurst, spec.n)) ** half
    total = float(np.sum(corr * (corr @ corr)))
    return triangle.weight * total / (spec.n * spec.v_n) ** 1.5


__all__ = [
    "KAPPA3_N_CAP",
    "SUPPORTED_ARITIES",
    "direct_kappa3",
    "enumerate_diagrams",
    "exact_cumulants",
    "exact_kappa3",
    "joint_hermite_moment",
    "lattice_sum",
    "lattice_sums",
    "moment4_all_diagrams",
    "validate_weight_formula",
]
