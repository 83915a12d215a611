from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np
import pytest
from numpy.polynomial import hermite_e

from hermvar.exceptions import CapacityError, DomainError, UnsupportedArityError
from hermvar.services.covariance import build_spec, covariance_table
from hermvar.services.diagrams import (
    direct_kappa3,
    enumerate_diagrams,
    exact_cumulants,
    exact_kappa3,
    joint_hermite_moment,
    lattice_sum,
    lattice_sums,
    moment4_all_diagrams,
    validate_weight_formula,
)


def _isserlis_hermite_moment(q: int, corr: np.ndarray) -> float:
    """E[prod_i H_q(X_i)] by expanding each H_q into monomials and pairing them off."""
    m = corr.shape[0]
    coeffs = hermite_e.herme2poly([0] * q + [1])

    @lru_cache(maxsize=None)
    def moment(powers: tuple[int, ...]) -> float:
        if sum(powers) == 0:
            return 1.0
        if sum(powers) % 2:
            return 0.0
        i = next(idx for idx, p in enumerate(powers) if p)
        rest = list(powers)
        rest[i] -= 1
        total = 0.0
        for j in range(m):
            if rest[j]:
                lowered = rest.copy()
                multiplicity = lowered[j]
                lowered[j] -= 1
                total += multiplicity * corr[i, j] * moment(tuple(lowered))
        return total

    value = 0.0
    for powers in itertools.product(range(q + 1), repeat=m):
        weight = math.prod(coeffs[p] for p in powers)
        if weight:
            value += weight * moment(powers)
    return value


def _random_correlation(m: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((m, m + 2))
    cov = a @ a.T
    scale = np.sqrt(np.diag(cov))
    corr = cov / np.outer(scale, scale)
    np.fill_diagonal(corr, 1.0)
    return corr


def test_two_node_diagram_has_factorial_weight():
    for q in range(1, 7):
        (diagram,) = enumerate_diagrams(2, q)
        assert diagram.edges[0][1] == q
        assert diagram.weight == math.factorial(q)
        assert diagram.connected


def test_three_node_odd_degree_is_empty():
    assert enumerate_diagrams(3, 3) == []
    assert enumerate_diagrams(3, 5, connected_only=True) == []


def test_three_node_degree_two_triangle():
    (diagram,) = enumerate_diagrams(3, 2)
    assert [mult for _, _, mult in diagram.pairs()] == [1, 1, 1]
    assert diagram.weight == 8


def test_four_node_degree_two_cycles():
    connected = enumerate_diagrams(4, 2, connected_only=True)
    assert len(connected) == 3
    assert [d.weight for d in connected] == [16, 16, 16]
    disconnected = [d for d in enumerate_diagrams(4, 2) if not d.connected]
    assert [d.weight for d in disconnected] == [4, 4, 4]


@pytest.mark.parametrize("m", [1, 5, 0])
def test_unsupported_arity(m):
    with pytest.raises(UnsupportedArityError):
        enumerate_diagrams(m, 2)


def test_degree_zero_is_rejected():
    with pytest.raises(DomainError):
        enumerate_diagrams(2, 0)


@pytest.mark.parametrize(("m", "q"), [(2, 4), (3, 4), (4, 3), (4, 5)])
def test_rows_sum_to_degree_and_order_is_deterministic(m, q):
    diagrams = enumerate_diagrams(m, q)
    for diagram in diagrams:
        for row in diagram.edges:
            assert sum(row) == q
        assert all(diagram.edges[i][i] == 0 for i in range(m))
    assert diagrams == enumerate_diagrams(m, q)


def test_four_node_weight_formula():
    for q in (2, 3, 4):
        for d in enumerate_diagrams(4, q):
            x, y, z = d.edges[0][1], d.edges[0][2], d.edges[0][3]
            expected = math.factorial(q) ** 4 // (math.factorial(x) * math.factorial(y) * math.factorial(z)) ** 2
            assert d.weight == expected
            assert d.connected == (sum(v > 0 for v in (x, y, z)) >= 2)


def test_weight_self_check_passes():
    validate_weight_formula()


@pytest.mark.parametrize("m", [2, 3, 4])
@pytest.mark.parametrize("q", [1, 2, 3, 4])
def test_joint_moment_matches_isserlis(m, q):
    corr = _random_correlation(m, seed=10 * m + q)
    assert joint_hermite_moment(q, corr) == pytest.approx(
        _isserlis_hermite_moment(q, corr), rel=1e-10, abs=1e-12
    )


def test_two_point_moment_is_factorial_times_power():
    for q in range(1, 5):
        corr = np.array([[1.0, 0.37], [0.37, 1.0]])
        assert joint_hermite_moment(q, corr) == pytest.approx(math.factorial(q) * 0.37**q)


def test_joint_moment_rejects_bad_matrices():
    with pytest.raises(DomainError):
        joint_hermite_moment(2, np.ones((2, 3)))
    with pytest.raises(DomainError):
        joint_hermite_moment(2, np.array([[1.0, 0.2], [0.3, 1.0]]))
    with pytest.raises(DomainError):
        joint_hermite_moment(2, np.array([[2.0, 0.2], [0.2, 1.0]]))


@pytest.mark.parametrize("m", [2, 3, 4])
def test_lattice_sum_matches_brute_force(m):
    n, hurst = 6, 0.7
    table = covariance_table(hurst, 2 * n - 1)
    for diagram in enumerate_diagrams(m, 4):
        brute = 0.0
        for positions in itertools.product(range(n), repeat=m):
            term = 1.0
            for i, j, mult in diagram.pairs():
                term *= table[abs(positions[i] - positions[j])] ** mult
            brute += term
        assert lattice_sum(diagram, table, n) == pytest.approx(brute, rel=1e-12)


def test_lattice_sums_do_not_depend_on_jobs():
    n = 150
    table = covariance_table(0.7, 2 * n - 1)
    diagrams = enumerate_diagrams(4, 3)
    assert lattice_sums(diagrams, table, n, jobs=1) == lattice_sums(diagrams, table, n, jobs=4)


def test_lattice_sums_need_long_enough_table():
    with pytest.raises(CapacityError):
        lattice_sums(enumerate_diagrams(2, 2), covariance_table(0.5, 5), 10)


@pytest.mark.parametrize("n", [4, 10, 100])
def test_chi_square_cumulants(n):
    report = exact_cumulants(build_spec(2, 0.5, n))
    assert report.kappa2 == pytest.approx(1.0, abs=1e-12)
    assert report.kappa3 == pytest.approx(math.sqrt(8.0 / n), rel=1e-10)
    assert report.kappa4 == pytest.approx(12.0 / n, rel=1e-10)
    assert report.m_stat == max(abs(report.kappa3), report.kappa4)


def test_cli_example_values():
    report = exact_cumulants(build_spec(2, 0.5, 10))
    assert report.kappa3 == pytest.approx(0.894427191, rel=1e-9)
    assert report.kappa4 == pytest.approx(1.2, rel=1e-12)


@pytest.mark.parametrize("q", [3, 5])
@pytest.mark.parametrize("hurst", [0.3, 0.6, 0.8])
def test_odd_degree_third_cumulant_vanishes(q, hurst):
    for n in (8, 64):
        spec = build_spec(q, hurst, n)
        assert exact_kappa3(spec) == 0.0
        assert exact_cumulants(spec).kappa3 == 0.0


def test_third_cumulant_at_large_n_stays_exact():
    n = 4096
    assert exact_kappa3(build_spec(2, 0.5, n)) == pytest.approx(math.sqrt(8.0 / n), rel=1e-10)


def test_variance_is_one_on_small_grid(small_specs):
    for spec in small_specs:
        assert exact_cumulants(spec).kappa2 == pytest.approx(1.0, abs=1e-12)


@pytest.mark.slow
def test_fourth_cumulant_positive_on_default_grid():
    for q in (2, 3):
        for hurst in (0.5, 0.7):
            for n in (32, 64, 128, 256, 512):
                assert exact_cumulants(build_spec(q, hurst, n)).kappa4 > 0.0


@pytest.mark.parametrize("q", [2, 3, 5])
@pytest.mark.parametrize("hurst", [0.5, 0.7])
def test_all_diagram_moment_matches_fourth_cumulant(q, hurst):
    for n in (16, 64, 256):
        spec = build_spec(q, hurst, n)
        kappa4 = exact_cumulants(spec).kappa4
        assert moment4_all_diagrams(spec) - 3.0 == pytest.approx(kappa4, rel=1e-9)


@pytest.mark.parametrize(("q", "hurst"), [(2, 0.7), (4, 0.6), (2, 0.3)])
def test_reduced_third_cumulant_matches_direct_triple_sum(q, hurst):
    spec = build_spec(q, hurst, 50)
    assert exact_kappa3(spec) == pytest.approx(direct_kappa3(spec), rel=1e-11)


def test_exact_cap_is_enforced():
    spec = build_spec(2, 0.5, 600)
    with pytest.raises(CapacityError, match="sample_cumulants"):
        exact_cumulants(spec, exact_n_cap=512)
