from __future__ import annotations

import math

import numpy as np
import pytest

from hermvar.exceptions import CapacityError, CovarianceError, DomainError
from hermvar.services.covariance import FgnCovariance, TabulatedCovariance, build_spec, fgn_rho
from hermvar.services.sampler import (
    block_generator,
    embedding_eigenvalues,
    inverse_cdf_normals,
    job_seed,
    sample_cumulants,
    sample_fgn,
    sample_fn,
    sample_gaussian_sequence,
    standard_normal_batch,
)


@pytest.mark.parametrize("hurst", [0.1, 0.3, 0.5, 0.75, 0.9])
def test_fgn_embedding_is_nonnegative(hurst):
    eigenvalues = embedding_eigenvalues(FgnCovariance(hurst), 128)
    assert eigenvalues.size == 254
    assert eigenvalues.min() > -1e-9


def test_inverse_cdf_normals_are_finite_and_standard():
    draws = inverse_cdf_normals(block_generator(1, 0), (200_000,))
    assert np.all(np.isfinite(draws))
    assert abs(draws.mean()) < 4.0 / math.sqrt(draws.size)
    assert draws.var() == pytest.approx(1.0, abs=0.02)


@pytest.mark.parametrize("hurst", [0.3, 0.5, 0.75])
def test_empirical_correlations_match_fgn(hurst):
    rows = sample_fgn(hurst, 128, 100_000, seed=99)
    for k in range(0, 11):
        per_row = (rows[:, : 128 - k] * rows[:, k:]).mean(axis=1)
        estimate = per_row.mean()
        se = per_row.std(ddof=1) / math.sqrt(per_row.size)
        assert abs(estimate - fgn_rho(hurst, k)) <= 4.0 * se


def test_identical_seeds_give_identical_draws_at_any_jobs():
    spec = build_spec(2, 0.7, 64)
    first = sample_fn(spec, 5000, seed=3, block_size=512, jobs=1)
    second = sample_fn(spec, 5000, seed=3, block_size=512, jobs=4)
    assert first.replicates.tobytes() == second.replicates.tobytes()
    other = sample_fn(spec, 5000, seed=4, block_size=512)
    assert not np.array_equal(first.replicates, other.replicates)


def test_sampled_statistic_is_standardized():
    spec = build_spec(3, 0.6, 32)
    batch = sample_fn(spec, 50_000, seed=11)
    assert batch.count == 50_000
    assert abs(batch.replicates.mean()) < 4.0 / math.sqrt(batch.count)
    assert batch.replicates.var() == pytest.approx(1.0, abs=0.05)


def test_sampled_cumulants_match_chi_square_values():
    n = 20
    batch = sample_fn(build_spec(2, 0.5, n), 200_000, seed=5)
    report = sample_cumulants(batch)
    assert report.source == "sampled"
    assert report.kappa2 == pytest.approx(1.0, abs=0.02)
    assert abs(report.kappa3 - math.sqrt(8.0 / n)) <= 4.0 * report.kappa3_se + 0.01
    assert abs(report.kappa4 - 12.0 / n) <= 4.0 * report.kappa4_se + 0.02
    assert report.m_stat == max(abs(report.kappa3), report.kappa4)


def test_single_point_statistic_is_scaled_hermite():
    spec = build_spec(2, 0.4, 1)
    batch = sample_fn(spec, 20_000, seed=8)
    # F_1 = (X^2 - 1) / sqrt(2) >= -1 / sqrt(2).
    assert batch.replicates.min() >= -1.0 / math.sqrt(2.0) - 1e-12


def test_cholesky_fallback_reproduces_covariance():
    table = TabulatedCovariance((1.0, 0.9, 0.7))
    assert embedding_eigenvalues(table, 3).min() < 0.0
    rows = sample_gaussian_sequence(table, 3, 100_000, seed=21)
    empirical = np.cov(rows, rowvar=False)
    np.testing.assert_allclose(empirical[0], [1.0, 0.9, 0.7], atol=0.02)


def test_non_positive_definite_table_is_rejected():
    with pytest.raises(CovarianceError):
        sample_gaussian_sequence(TabulatedCovariance((1.0, 0.9, -0.9)), 3, 100, seed=1)


def test_sizes_are_validated():
    with pytest.raises(DomainError):
        sample_fn(build_spec(2, 0.5, 8), 0, seed=1)
    with pytest.raises(DomainError):
        sample_gaussian_sequence(FgnCovariance(0.5), 0, 10, seed=1)


def test_sample_cumulants_requirements():
    with pytest.raises(DomainError):
        sample_cumulants(standard_normal_batch(1000, seed=1))
    with pytest.raises(CapacityError):
        sample_cumulants(sample_fn(build_spec(2, 0.5, 8), 50, seed=1))


def test_standard_normal_batch_shift():
    batch = standard_normal_batch(100_000, seed=12, shift=1.0)
    assert batch.spec is None
    assert batch.replicates.mean() == pytest.approx(1.0, abs=0.02)


def test_job_seed_is_deterministic_and_purpose_specific():
    spec = build_spec(2, 0.5, 16)
    assert job_seed(1, spec, "simulate") == job_seed(1, spec, "simulate")
    assert job_seed(1, spec, "simulate") != job_seed(1, spec, "distance")
    assert job_seed(1, spec, "simulate") != job_seed(2, spec, "simulate")
    assert 0 <= job_seed(1, spec, "simulate") < 2**64
