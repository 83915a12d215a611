"""Exact simulation of stationary Gaussian sequences and replicates of F_n."""
from __future__ import annotations

import hashlib
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import fft, linalg
from scipy.special import ndtri
from scipy.stats import kstat

from ..config import BLOCK_SIZE
from ..exceptions import CapacityError, CovarianceError, DomainError
from ..logging_config import get_logger
from ..models import CumulantReport, SampleBatch, VariationSpec
from .covariance import CovarianceSequence, FgnCovariance
from .hermite import hermite_eval_batch

logger = get_logger(__name__)

EIGENVALUE_TOLERANCE = 1e-9
_UNIT_SCALE = 2.0**-53


def job_seed(seed: int, spec: VariationSpec, purpose: str) -> int:
    """64-bit Philox key for one (spec, purpose) job, derived from the experiment seed."""
    token = f"{seed}:{purpose}:{spec.q}:{spec.hurst!r}:{spec.n}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(token).digest()[:8], "little")


def block_generator(seed: int, block_index: int) -> np.random.Generator:
    """Philox stream keyed by ``seed`` whose top counter word is the block index."""
    return np.random.Generator(np.random.Philox(key=seed, counter=[0, 0, 0, block_index]))


def inverse_cdf_normals(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Standard normals as ndtri of uniforms on the open grid (k + 1/2) 2^-53."""
    bits = rng.integers(0, 1 << 53, size=shape, dtype=np.uint64)
    return ndtri((bits.astype(np.float64) + 0.5) * _UNIT_SCALE)


def embedding_eigenvalues(
    cov: CovarianceSequence, n: int, fast_length: bool = False
) -> np.ndarray:
    """Eigenvalues of the circulant embedding of the n x n Toeplitz covariance."""
    if n < 2:
        return np.ones(1)
    size = 2 * (n - 1)
    if fast_length:
        size = fft.next_fast_len(size)
        while size % 2:
            size = fft.next_fast_len(size + 1)
    half = size // 2
    head = np.asarray(cov.table(half + 1), dtype=np.float64)
    row = np.concatenate([head, head[-2:0:-1]])
    return fft.fft(row).real


@dataclass(frozen=True)
class _GaussianPlan:
    """Everything needed to turn normals into rows with the target covariance."""

    n: int
    sqrt_eigenvalues: np.ndarray | None
    cholesky_factor: np.ndarray | None

    @property
    def method(self) -> str:
        if self.n == 1:
            return "direct"
        return "circulant" if self.sqrt_eigenvalues is not None else "cholesky"

    def block(self, seed: int, block_index: int, size: int) -> np.ndarray:
        rng = block_generator(seed, block_index)
        if self.n == 1:
            return inverse_cdf_normals(rng, (size, 1))
        if self.sqrt_eigenvalues is not None:
            pairs = (size + 1) // 2
            length = self.sqrt_eigenvalues.size
            normals = inverse_cdf_normals(rng, (2, pairs, length))
            spectrum = (normals[0] + 1j * normals[1]) * self.sqrt_eigenvalues
            field = fft.fft(spectrum, axis=1)
            rows = np.empty((2 * pairs, self.n))
            rows[0::2] = field.real[:, : self.n]
            rows[1::2] = field.imag[:, : self.n]
            return rows[:size]
        assert self.cholesky_factor is not None
        return inverse_cdf_normals(rng, (size, self.n)) @ self.cholesky_factor.T


def _make_plan(cov: CovarianceSequence, n: int, fast_length: bool = False) -> _GaussianPlan:
    if n == 1:
        return _GaussianPlan(n=1, sqrt_eigenvalues=None, cholesky_factor=None)

    eigenvalues = embedding_eigenvalues(cov, n, fast_length=fast_length)
    smallest = float(eigenvalues.min())
    if smallest >= -EIGENVALUE_TOLERANCE:
        if smallest < 0.0:
            logger.debug("Clipping embedding eigenvalues down to %.3g", smallest)
        clipped = np.clip(eigenvalues, 0.0, None)
        return _GaussianPlan(
            n=n,
            sqrt_eigenvalues=np.sqrt(clipped / eigenvalues.size),
            cholesky_factor=None,
        )

    logger.warning(
        "Circulant embedding has eigenvalue %.3g < -%.0e for n=%s; falling back to Cholesky",
        smallest,
        EIGENVALUE_TOLERANCE,
        n,
    )
    try:
        factor = linalg.cholesky(linalg.toeplitz(cov.table(n)), lower=True)
    except linalg.LinAlgError as exc:
        message = f"covariance of length {n} is numerically not positive definite"
        logger.error(message)
        raise CovarianceError(message) from exc
    return _GaussianPlan(n=n, sqrt_eigenvalues=None, cholesky_factor=factor)


def _check_sizes(n: int, count: int) -> None:
    if n < 1 or count < 1:
        message = f"need n >= 1 and count >= 1, got n={n}, count={count}"
        logger.error(message)
        raise DomainError(message)


def _run_blocks(
    plan: _GaussianPlan,
    count: int,
    seed: int,
    block_size: int,
    jobs: int,
    reduce: Callable[[np.ndarray], np.ndarray],
) -> np.ndarray:
    sizes = [min(block_size, count - start) for start in range(0, count, block_size)]

    def work(index: int) -> np.ndarray:
        return reduce(plan.block(seed, index, sizes[index]))

    if jobs > 1 and len(sizes) > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, range(len(sizes))))
    else:
        parts = [work(index) for index in range(len(sizes))]
    return np.concatenate(parts, axis=0)


def sample_gaussian_sequence(
    cov: CovarianceSequence,
    n: int,
    count: int,
    seed: int,
    block_size: int = BLOCK_SIZE,
    jobs: int = 1,
    fast_length: bool = False,
) -> np.ndarray:
    """``count`` independent rows (X_0..X_{n-1}) of a stationary sequence with correlations ``cov``."""
    _check_sizes(n, count)
    plan = _make_plan(cov, n, fast_length=fast_length)
    return _run_blocks(plan, count, seed, block_size, jobs, reduce=lambda rows: rows)


def sample_fgn(
    hurst: float,
    n: int,
    count: int,
    seed: int,
    block_size: int = BLOCK_SIZE,
    jobs: int = 1,
) -> np.ndarray:
    """``count`` x ``n`` matrix of fractional Gaussian noise rows."""
    return sample_gaussian_sequence(
        FgnCovariance(hurst), n, count, seed, block_size=block_size, jobs=jobs
    )


def sample_fn(
    spec: VariationSpec,
    count: int,
    seed: int,
    block_size: int = BLOCK_SIZE,
    jobs: int = 1,
) -> SampleBatch:
    """Replicates of F_n = (n v_n)^{-1/2} sum_k H_q(X_k), one fGn row each."""
    _check_sizes(spec.n, count)
    start_time = time.time()
    logger.info("Sampling %s replicates of %s (block size %s)", count, spec.label, block_size)

    plan = _make_plan(FgnCovariance(spec.hurst), spec.n)
    scale = 1.0 / math.sqrt(spec.n * spec.v_n)
    values = _run_blocks(
        plan,
        count,
        seed,
        block_size,
        jobs,
        reduce=lambda rows: hermite_eval_batch(spec.q, rows).sum(axis=1) * scale,
    )

    elapsed_time = time.time() - start_time
    logger.info(
        "Sampling %s via %s embedding completed in %.2f seconds",
        spec.label,
        plan.method,
        elapsed_time,
    )
    return SampleBatch(spec=spec, replicates=values, seed=seed, count=count)


def standard_normal_batch(
    count: int, seed: int, shift: float = 0.0, block_size: int = BLOCK_SIZE
) -> SampleBatch:
    """Reference N(shift, 1) batch drawn with the same stream layout as :func:`sample_fn`."""
    _check_sizes(1, count)
    plan = _GaussianPlan(n=1, sqrt_eigenvalues=None, cholesky_factor=None)
    values = _run_blocks(plan, count, seed, block_size, 1, reduce=lambda rows: rows[:, 0])
    return SampleBatch(spec=None, replicates=values + shift, seed=seed, count=count)


def sample_cumulants(batch: SampleBatch, sub_batches: int = 10) -> CumulantReport:
    """k-statistic estimates of kappa2..kappa4 with standard errors from sub-batches."""
    if batch.spec is None:
        message = "sampled cumulants need a batch generated from a VariationSpec"
        logger.error(message)
        raise DomainError(message)
    if batch.count < 10 * sub_batches:
        message = f"need at least {10 * sub_batches} replicates, got {batch.count}"
        logger.error(message)
        raise CapacityError(message)

    x = batch.replicates
    parts = np.array_split(x, sub_batches)
    k3_parts = np.array([kstat(part, 3) for part in parts])
    k4_parts = np.array([kstat(part, 4) for part in parts])
    kappa3 = float(kstat(x, 3))
    kappa4 = float(kstat(x, 4))
    return CumulantReport(
        spec=batch.spec,
        kappa2=float(kstat(x, 2)),
        kappa3=kappa3,
        kappa4=kappa4,
        m_stat=max(abs(kappa3), kappa4),
        source="sampled",
        kappa3_se=float(k3_parts.std(ddof=1) / math.sqrt(sub_batches)),
        kappa4_se=float(k4_parts.std(ddof=1) / math.sqrt(sub_batches)),
    )


__all__ = [
    "EIGENVALUE_TOLERANCE",
    "block_generator",
    "embedding_eigenvalues",
    "inverse_cdf_normals",
    "job_seed",
    "sample_cumulants",
    "sample_fgn",
    "sample_fn",
    "sample_gaussian_sequence",
    "standard_normal_batch",
]
