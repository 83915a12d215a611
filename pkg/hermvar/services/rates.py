"""Convergence-rate tables, exponent fits and the experiment grid runner."""
from __future__ import annotations

import math
import time
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import linregress

from ..config import ExperimentConfig
from ..exceptions import (
    DomainError,
    HermvarError,
    NotTabulatedError,
    OutOfRegimeError,
    VanishingStatisticError,
)
from ..logging_config import get_logger
from ..models import (
    CumulantReport,
    GridResult,
    RateFit,
    SampleBatch,
    SandwichRecord,
    VariationSpec,
)
from ..utils import is_geometric
from .covariance import breuer_major_threshold, build_spec, in_clt_regime
from .diagrams import KAPPA3_N_CAP, exact_cumulants, exact_kappa3
from .distances import distance_report
from .sampler import job_seed, sample_cumulants, sample_fn

logger = get_logger(__name__)

STATISTICS = ("kappa3", "kappa4", "tv", "m_stat")
MIN_FIT_POINTS = 5
EXPONENT_TOLERANCE = 0.05
BOUNDARY_TOLERANCE = 0.15
# Within this distance of a regime boundary log factors and transients dominate.
BOUNDARY_WIDTH = 0.05
_BOUNDARY_ATOL = 1e-9
_SLOPE_ATOL = 1e-6
# Descriptive band for d_TV / M; ratios outside it are reported, not rejected.
SANDWICH_INTERVAL = (0.1, 10.0)

Rate = tuple[float, int]


def _select(hurst: float, boundary: float, below: Rate, at: Rate, above: Rate) -> Rate:
    if math.isclose(hurst, boundary, rel_tol=0.0, abs_tol=_BOUNDARY_ATOL):
        return at
    return below if hurst < boundary else above


def _kappa3_rate(q: int, h: float) -> Rate:
    return _select(h, 1.0 - 2.0 / (3.0 * q), (-0.5, 0), (-0.5, 2), (1.5 - 3.0 * q + 3.0 * q * h, 0))


def _kappa4_rate(q: int, h: float) -> Rate:
    long_memory = (4.0 * q * h - 4.0 * q + 2.0, 0)
    if q <= 3:
        return _select(h, 1.0 - 3.0 / (4.0 * q), (-1.0, 0), (-1.0, 3), long_memory)
    upper = _select(
        h, 1.0 - 1.0 / (2.0 * q - 2.0), (4.0 * h - 4.0, 0), (4.0 * h - 4.0, 2), long_memory
    )
    return _select(h, 0.75, (-1.0, 0), (-1.0, 1), upper)


def _tv_rate(q: int, h: float) -> Rate:
    if q == 2:
        return _select(h, 2.0 / 3.0, (-0.5, 0), (-0.5, 2), (6.0 * h - 4.5, 0))
    return _select(h, 0.75, (-1.0, 0), (-1.0, 3), (12.0 * h - 10.0, 0))


def dominant_rate(first: Rate, second: Rate) -> Rate:
    """The slower-decaying of two n^a log^b n orders."""
    if math.isclose(first[0], second[0], rel_tol=0.0, abs_tol=_BOUNDARY_ATOL):
        return first if first[1] >= second[1] else second
    return first if first[0] > second[0] else second


def regime_boundaries(q: int, statistic: str) -> tuple[float, ...]:
    """Hurst values at which the rate of ``statistic`` changes form."""
    if statistic == "kappa3":
        return (1.0 - 2.0 / (3.0 * q),)
    if statistic == "kappa4":
        if q <= 3:
            return (1.0 - 3.0 / (4.0 * q),)
        return (0.75, 1.0 - 1.0 / (2.0 * q - 2.0))
    if statistic == "tv":
        return {2: (2.0 / 3.0,), 3: (0.75,)}.get(q, ())
    combined = set(regime_boundaries(q, "kappa4"))
    if q % 2 == 0:
        combined.update(regime_boundaries(q, "kappa3"))
    return tuple(sorted(combined))


def theoretical_exponent(q: int, hurst: float, statistic: str) -> Rate:
    """(exponent a, log power b) such that the statistic behaves like n^a log^b n.

    ``m_stat`` is max(|kappa3|, kappa4); its rate is the slower of the two
    cumulant rates, and for q in {2, 3} it coincides with the d_TV table.
    """
    if statistic not in STATISTICS:
        message = f"unknown statistic {statistic!r}; expected one of {', '.join(STATISTICS)}"
        logger.error(message)
        raise DomainError(message)
    if q < 2 or not in_clt_regime(q, hurst):
        message = (
            f"H={hurst} is outside the CLT regime 0 < H < {breuer_major_threshold(max(q, 2)):.4f} "
            f"for q={q}; no rate is tabulated"
        )
        logger.error(message)
        raise OutOfRegimeError(message)

    if statistic == "kappa3":
        if q % 2:
            message = f"kappa3(F_n) vanishes identically for odd q={q}"
            logger.error(message)
            raise VanishingStatisticError(message)
        return _kappa3_rate(q, hurst)
    if statistic == "kappa4":
        return _kappa4_rate(q, hurst)
    if statistic == "tv":
        if q not in (2, 3):
            message = f"the d_TV rate is tabulated for q in {{2, 3}} only, got q={q}"
            logger.error(message)
            raise NotTabulatedError(message)
        return _tv_rate(q, hurst)
    kappa4 = _kappa4_rate(q, hurst)
    return kappa4 if q % 2 else dominant_rate(_kappa3_rate(q, hurst), kappa4)


def tables_consistent(q: int, hurst: float) -> bool:
    """True when the d_TV table agrees with the slower of the two cumulant rates."""
    tv = theoretical_exponent(q, hurst, "tv")
    implied = theoretical_exponent(q, hurst, "m_stat")
    return math.isclose(tv[0], implied[0], rel_tol=0.0, abs_tol=_BOUNDARY_ATOL) and tv[1] == implied[1]


def regime_label(q: int, hurst: float, statistic: str) -> str:
    if not in_clt_regime(q, hurst):
        return "outside CLT regime"
    boundaries = regime_boundaries(q, statistic)
    for boundary in boundaries:
        if math.isclose(hurst, boundary, rel_tol=0.0, abs_tol=_BOUNDARY_ATOL):
            return f"H = {boundary:.4f}"
    lower = max((b for b in boundaries if b < hurst), default=0.0)
    upper = min((b for b in boundaries if b > hurst), default=breuer_major_threshold(q))
    return f"{lower:.4f} < H < {upper:.4f}"


def _local_slopes(log_n: np.ndarray, log_y: np.ndarray) -> np.ndarray:
    return np.diff(log_y) / np.diff(log_n)


def _drifting(slopes: np.ndarray) -> bool:
    changes = np.diff(slopes)
    if changes.size < 2:
        return False
    return bool(np.all(changes > _SLOPE_ATOL) or np.all(changes < -_SLOPE_ATOL))


def fit_exponent_detail(
    points: Sequence[tuple[float, float]], log_power: int = 0
) -> tuple[float, float, int, bool]:
    """(slope, stderr, points used, trimmed) of log(value / log^b n) against log n."""
    if len(points) < MIN_FIT_POINTS:
        message = f"an exponent fit needs at least {MIN_FIT_POINTS} points, got {len(points)}"
        logger.error(message)
        raise DomainError(message)
    ordered = sorted(points)
    n = np.array([p[0] for p in ordered], dtype=np.float64)
    values = np.array([p[1] for p in ordered], dtype=np.float64)
    if np.any(values <= 0.0) or np.any(n <= 1.0):
        message = "exponent fits need n > 1 and strictly positive values"
        logger.error(message)
        raise DomainError(message)
    if not is_geometric(n):
        logger.warning("n-grid %s is not geometric; fitting anyway", [int(v) for v in n])

    log_n = np.log(n)
    log_y = np.log(values) - log_power * np.log(log_n)
    trimmed = False
    if _drifting(_local_slopes(log_n, log_y)):
        keep = max(3, math.ceil(n.size / 2))
        logger.info(
            "Local slopes drift monotonically; refitting on the top %s of %s points", keep, n.size
        )
        log_n, log_y = log_n[-keep:], log_y[-keep:]
        trimmed = True

    fit = linregress(log_n, log_y)
    stderr = float(fit.stderr)
    if not math.isfinite(stderr):
        stderr = 0.0
    return float(fit.slope), stderr, int(log_n.size), trimmed


def fit_exponent(points: Sequence[tuple[float, float]], log_power: int = 0) -> tuple[float, float]:
    """Least-squares exponent of ``points`` with its standard error."""
    slope, stderr, _, _ = fit_exponent_detail(points, log_power)
    return slope, stderr


def replicates_for(m_stat: float, config: ExperimentConfig) -> tuple[int, bool]:
    """max(min_replicates, 16 / M^2) capped at max_replicates, and whether the cap bit."""
    if m_stat <= 0.0 or not math.isfinite(m_stat):
        return config.max_replicates, True
    wanted = max(config.min_replicates, math.ceil(16.0 / m_stat**2))
    if wanted > config.max_replicates:
        return config.max_replicates, True
    return wanted, False


def cumulants_for(
    spec: VariationSpec, config: ExperimentConfig, batch: SampleBatch | None = None
) -> CumulantReport:
    """Exact cumulants up to ``exact_n_cap``, above it exact kappa3 with a sampled kappa4.

    ``batch`` supplies the samples for the sampled part; without it a fresh batch is drawn.
    """
    if spec.n <= config.exact_n_cap:
        return exact_cumulants(spec, exact_n_cap=config.exact_n_cap, jobs=config.jobs)

    logger.info("n=%s is above the exact cap %s; sampling cumulants", spec.n, config.exact_n_cap)
    if batch is None:
        batch = sample_fn(
            spec,
            config.replicates,
            job_seed(config.seed, spec, "cumulants"),
            block_size=config.block_size,
            jobs=config.jobs,
        )
    sampled = sample_cumulants(batch)
    if spec.n > KAPPA3_N_CAP:
        return sampled
    kappa3 = exact_kappa3(spec, jobs=config.jobs)
    return CumulantReport(
        spec=spec,
        kappa2=sampled.kappa2,
        kappa3=kappa3,
        kappa4=sampled.kappa4,
        m_stat=max(abs(kappa3), sampled.kappa4),
        source="mixed",
        kappa3_se=0.0,
        kappa4_se=sampled.kappa4_se,
    )


def _record_failure(result: GridResult, q: int, hurst: float, n: int | None, stage: str, exc: Exception) -> None:
    logger.warning("Grid point q=%s H=%s n=%s failed during %s: %s", q, hurst, n, stage, exc)
    result.failures.append(
        {
            "q": str(q),
            "H": f"{hurst:g}",
            "n": "" if n is None else str(n),
            "stage": stage,
            "error": f"{type(exc).__name__}: {exc}",
        }
    )


def _tolerance(q: int, hurst: float, statistic: str, log_power: int) -> float:
    near = any(abs(hurst - b) <= BOUNDARY_WIDTH for b in regime_boundaries(q, statistic))
    return BOUNDARY_TOLERANCE if near or log_power else EXPONENT_TOLERANCE


def ratios_stable(ratios: Iterable[float]) -> bool:
    """Every ratio lies within [min / 2, 2 max] of the central half of the sequence."""
    values = [r for r in ratios if math.isfinite(r)]
    if not values:
        return False
    quarter = len(values) // 4
    central = values[quarter : len(values) - quarter] or values
    lo, hi = min(central) / 2.0, 2.0 * max(central)
    return all(lo <= r <= hi for r in values)


def ratios_in_interval(
    ratios: Iterable[float], interval: tuple[float, float] = SANDWICH_INTERVAL
) -> bool:
    """Every finite ratio lies in ``interval``; false when none is finite."""
    values = [r for r in ratios if math.isfinite(r)]
    lo, hi = interval
    return bool(values) and all(lo <= r <= hi for r in values)


def _fit_family(
    result: GridResult,
    q: int,
    hurst: float,
    series: dict[str, list[tuple[float, float]]],
) -> None:
    for statistic, points in series.items():
        if not points or (statistic == "kappa3" and q % 2):
            continue
        try:
            theoretical, log_power = theoretical_exponent(q, hurst, statistic)
        except (OutOfRegimeError, NotTabulatedError):
            theoretical, log_power = None, 0
        except VanishingStatisticError:
            continue

        try:
            slope, stderr, used, trimmed = fit_exponent_detail(points, log_power)
        except DomainError as exc:
            _record_failure(result, q, hurst, None, f"fit {statistic}", exc)
            continue

        fit = RateFit(
            statistic=statistic,
            q=q,
            hurst=hurst,
            n_grid=tuple(int(n) for n, _ in sorted(points)),
            fitted_exponent=slope,
            stderr=stderr,
            theoretical_exponent=theoretical,
            log_power=log_power,
            regime_label=regime_label(q, hurst, statistic),
            used_points=used,
            trimmed=trimmed,
        )
        result.fits.append(fit)
        discrepancy = fit.discrepancy
        if discrepancy is not None:
            tolerance = _tolerance(q, hurst, statistic, log_power)
            if discrepancy > tolerance:
                result.flags.setdefault("exponent_discrepancy", []).append(
                    {
                        "statistic": statistic,
                        "q": q,
                        "H": hurst,
                        "fitted": slope,
                        "theoretical": theoretical,
                        "tolerance": tolerance,
                    }
                )


def run_grid(
    qs: Sequence[int],
    hs: Sequence[float],
    n_grid: Sequence[int],
    config: ExperimentConfig,
    simulate: bool = True,
) -> GridResult:
    """Cumulants, distances, exponent fits and sandwich ratios over qs x hs x n_grid.

    A failing grid point is recorded in ``failures`` and the run carries on.
    """
    start_time = time.time()
    result = GridResult()
    result.flags.update(
        {
            "sandwich_stable": {},
            "sandwich_in_interval": {},
            "unresolvable": [],
            "exponent_discrepancy": [],
        }
    )
    logger.info(
        "Running grid: q=%s H=%s n=%s (simulate=%s)", list(qs), list(hs), list(n_grid), simulate
    )

    for q in qs:
        for hurst in hs:
            series: dict[str, list[tuple[float, float]]] = {name: [] for name in STATISTICS}
            ratios: list[float] = []
            for n in n_grid:
                try:
                    spec = build_spec(q, hurst, n)
                    report = cumulants_for(spec, config)
                except HermvarError as exc:
                    _record_failure(result, q, hurst, n, "cumulants", exc)
                    continue
                result.cumulants.append(report)
                series["kappa3"].append((n, abs(report.kappa3)))
                series["kappa4"].append((n, report.kappa4))
                series["m_stat"].append((n, report.m_stat))
                if not simulate:
                    continue

                count, unresolvable = replicates_for(report.m_stat, config)
                if unresolvable:
                    logger.warning(
                        "Distance unresolvable at desk scale for %s (M=%.3g); using %s replicates",
                        spec.label,
                        report.m_stat,
                        count,
                    )
                    result.flags["unresolvable"].append(spec.label)
                try:
                    batch = sample_fn(
                        spec,
                        count,
                        job_seed(config.seed, spec, "distance"),
                        block_size=config.block_size,
                        jobs=config.jobs,
                    )
                    distances = distance_report(
                        batch,
                        report,
                        method=config.tv_method,
                        grid_points=config.tv_grid,
                        bias_allowance=config.bias_allowance,
                    )
                except HermvarError as exc:
                    _record_failure(result, q, hurst, n, "distance", exc)
                    continue
                result.distances.append(distances)
                series["tv"].append((n, distances.tv_density.value))
                ratios.append(distances.sandwich_ratio)
                result.sandwich.append(
                    SandwichRecord(
                        spec=spec,
                        m_stat=report.m_stat,
                        tv_estimate=distances.tv_density.value,
                        ratio=distances.sandwich_ratio,
                    )
                )

            _fit_family(result, q, hurst, series)
            if ratios:
                key = f"q{q}_H{hurst:g}"
                result.flags["sandwich_stable"][key] = ratios_stable(ratios)
                result.flags["sandwich_in_interval"][key] = ratios_in_interval(ratios)

    elapsed_time = time.time() - start_time
    logger.info(
        "Grid completed in %.2f seconds: %s cumulant rows, %s fits, %s failures",
        elapsed_time,
        len(result.cumulants),
        len(result.fits),
        len(result.failures),
    )
    return result


__all__ = [
    "SANDWICH_INTERVAL",
    "STATISTICS",
    "cumulants_for",
    "dominant_rate",
    "fit_exponent",
    "fit_exponent_detail",
    "ratios_in_interval",
    "ratios_stable",
    "regime_boundaries",
    "regime_label",
    "replicates_for",
    "run_grid",
    "tables_consistent",
    "theoretical_exponent",
]
