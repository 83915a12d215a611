from __future__ import annotations

import math

import numpy as np
import pytest

from hermvar.exceptions import CapacityError, DomainError
from hermvar.services.covariance import (
    CovarianceSequence,
    FgnCovariance,
    TabulatedCovariance,
    breuer_major_threshold,
    build_spec,
    covariance_table,
    fgn_rho,
    in_clt_regime,
    rho_asymptotic,
    variance_norm,
)


def _direct_rho(hurst: float, k: int) -> float:
    return 0.5 * (abs(k + 1) ** (2 * hurst) - 2 * abs(k) ** (2 * hurst) + abs(k - 1) ** (2 * hurst))


@pytest.mark.parametrize("hurst", [0.1, 0.3, 0.5, 0.75, 0.9])
def test_rho_at_zero_is_one(hurst):
    assert fgn_rho(hurst, 0) == pytest.approx(1.0, abs=1e-15)


def test_rho_examples():
    assert fgn_rho(0.5, 3) == 0.0
    assert fgn_rho(0.75, 1) == pytest.approx(math.sqrt(2.0) - 1.0, rel=1e-12)


def test_rho_is_symmetric():
    lags = np.arange(-40, 41)
    values = fgn_rho(0.7, lags)
    np.testing.assert_array_equal(values, values[::-1])


@pytest.mark.parametrize("hurst", [0.2, 0.6, 0.85])
def test_series_branch_matches_direct_formula(hurst):
    for k in (16, 17, 40, 200):
        assert fgn_rho(hurst, k) == pytest.approx(_direct_rho(hurst, k), rel=1e-9)


def test_series_branch_is_exactly_zero_for_independent_increments():
    assert np.all(fgn_rho(0.5, np.arange(16, 1000)) == 0.0)


@pytest.mark.parametrize("hurst", [0.3, 0.75, 0.9])
def test_asymptotic_ratio_tends_to_one(hurst):
    ratio = fgn_rho(hurst, 10_000) / rho_asymptotic(hurst, 10_000)
    assert ratio == pytest.approx(1.0, abs=1e-4)


@pytest.mark.parametrize("hurst", [0.25, 0.5, 0.8])
def test_partial_sums_telescope(hurst):
    for m in (1, 5, 30, 100):
        total = float(np.sum(fgn_rho(hurst, np.arange(-m, m + 1))))
        assert total == pytest.approx((m + 1) ** (2 * hurst) - m ** (2 * hurst), abs=1e-10)


def test_invalid_hurst_is_rejected():
    for bad in (0.0, 1.0, -0.1, 1.2):
        with pytest.raises(DomainError):
            fgn_rho(bad, 1)


def test_covariance_table_is_read_only():
    table = covariance_table(0.7, 10)
    with pytest.raises(ValueError):
        table[0] = 2.0


@pytest.mark.parametrize(("q", "expected"), [(2, 2.0), (3, 6.0)])
def test_variance_norm_independent_increments(q, expected):
    for n in (1, 7, 100):
        assert variance_norm(q, 0.5, n) == pytest.approx(expected, rel=1e-14)


def test_variance_norm_single_point_is_factorial():
    for q in (2, 3, 4, 5):
        assert variance_norm(q, 0.73, 1) == pytest.approx(math.factorial(q), rel=1e-14)


def test_variance_norm_converges_in_clt_regime():
    values = [variance_norm(2, 0.6, n) for n in (256, 1024, 4096)]
    limit_gap = [abs(values[i + 1] - values[i]) for i in range(2)]
    assert limit_gap[1] < limit_gap[0]
    assert values[2] > values[1] > values[0]


def test_variance_norm_rejects_degree_one():
    with pytest.raises(DomainError):
        variance_norm(1, 0.5, 10)


def test_threshold_and_regime():
    assert breuer_major_threshold(2) == pytest.approx(0.75)
    assert in_clt_regime(2, 0.7)
    assert not in_clt_regime(2, 0.75)
    assert in_clt_regime(3, 0.8)


def test_build_spec_outside_regime_still_builds():
    spec = build_spec(2, 0.9, 16)
    assert spec.v_n > 0
    assert spec.label == "q2_H0.9_n16"


def test_build_spec_rejects_bad_inputs():
    with pytest.raises(DomainError):
        build_spec(1, 0.5, 4)
    with pytest.raises(DomainError):
        build_spec(2, 0.5, 0)
    with pytest.raises(DomainError):
        build_spec(2, 1.2, 4)


def test_covariance_implementations_share_protocol():
    fgn = FgnCovariance(0.7)
    tabulated = TabulatedCovariance(tuple(float(v) for v in fgn.table(8)))
    assert isinstance(fgn, CovarianceSequence)
    assert isinstance(tabulated, CovarianceSequence)
    np.testing.assert_array_equal(tabulated.table(8), fgn.table(8))
    assert tabulated.rho(-3) == pytest.approx(fgn.rho(3), rel=1e-15)


def test_tabulated_covariance_validation():
    with pytest.raises(DomainError):
        TabulatedCovariance((0.9, 0.1))
    with pytest.raises(DomainError):
        TabulatedCovariance((1.0, 1.5))
    with pytest.raises(CapacityError):
        TabulatedCovariance((1.0, 0.2)).rho(5)
