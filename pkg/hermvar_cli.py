"""Command-line entrypoint for the Hermite variation experiments."""

from __future__ import annotations

import argparse
from pathlib import Path
from typing import Callable, Iterator, Sequence

from hermvar.config import (
    MIN_DISTANCE_REPLICATES,
    ExperimentConfig,
    config_hash,
    load_config,
)
from hermvar.exceptions import CapacityError, ConfigError, HermvarError
from hermvar.logging_config import get_logger
from hermvar.models import DistanceReport, SampleBatch, VariationSpec
from hermvar.schemas import (
    CUMULANTS_FILE,
    CUMULANTS_HEADER,
    DISTANCES_FILE,
    DISTANCES_HEADER,
    FAILURES_FILE,
    FAILURES_HEADER,
    RATES_FILE,
    RATES_HEADER,
    SANDWICH_FILE,
    SANDWICH_HEADER,
    STEIN_FILE,
    sample_file_name,
)
from hermvar.services.covariance import build_spec
from hermvar.services.distances import calibrate_null, distance_report
from hermvar.services.diagrams import exact_cumulants
from hermvar.services.rates import MIN_FIT_POINTS, cumulants_for, run_grid
from hermvar.services.sampler import job_seed, sample_fn
from hermvar.services.serialization import (
    cumulant_rows,
    distance_rows,
    failure_rows,
    load_batch,
    rate_rows,
    read_sidecar,
    sandwich_rows,
    write_batch,
    write_json,
    write_table,
)
from hermvar.services.stein import stein_certificate
from hermvar.utils import is_geometric

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3


def _specs(config: ExperimentConfig) -> Iterator[VariationSpec]:
    for q in config.qs:
        for hurst in config.hs:
            for n in config.n_grid:
                yield build_spec(q, hurst, n)


def _require_distance_replicates(config: ExperimentConfig) -> None:
    if config.replicates < MIN_DISTANCE_REPLICATES:
        message = (
            f"distance estimates need replicates >= {MIN_DISTANCE_REPLICATES}, "
            f"got {config.replicates}"
        )
        logger.error(message)
        raise ConfigError(message)


def _null_self_test(config: ExperimentConfig) -> None:
    """Abort unless the TV estimator reads N(0, 1) against itself within the bias allowance."""
    floor = calibrate_null(
        config.max_replicates, config.seed, method=config.tv_method, grid_points=config.tv_grid
    )
    if floor.value > config.bias_allowance:
        message = (
            f"null self-test failed: TV(N, N) estimate {floor.value:.4f} exceeds "
            f"the bias allowance {config.bias_allowance}"
        )
        logger.error(message)
        raise CapacityError(message)
    logger.info("Null self-test passed (floor %.4f <= %.4f)", floor.value, config.bias_allowance)


def cmd_cumulants(config: ExperimentConfig) -> int:
    """Exact cumulants for every (q, H, n) of the configuration."""
    digest = config_hash(config)
    reports = [
        exact_cumulants(spec, exact_n_cap=config.exact_n_cap, jobs=config.jobs)
        for spec in _specs(config)
    ]
    out = Path(config.output_dir)
    write_table(out / CUMULANTS_FILE, "cumulants", CUMULANTS_HEADER, cumulant_rows(reports), digest, config.seed)
    write_json(
        out / "cumulants.json",
        {"cumulants": [report.as_dict() for report in reports]},
        digest,
        config.seed,
    )
    return EXIT_OK


def cmd_simulate(config: ExperimentConfig) -> int:
    """Dump ``replicates`` draws of F_n per spec."""
    digest = config_hash(config)
    out = Path(config.output_dir)
    for spec in _specs(config):
        batch = sample_fn(
            spec,
            config.replicates,
            job_seed(config.seed, spec, "simulate"),
            block_size=config.block_size,
            jobs=config.jobs,
        )
        write_batch(batch, out / sample_file_name(spec.label, config.sample_format), digest, config.sample_format)
    return EXIT_OK


def _distance_batch(
    spec: VariationSpec, config: ExperimentConfig, digest: str, simulate: bool
) -> SampleBatch:
    """The dump for ``spec`` if it was written under this config, else a fresh simulation."""
    sample_path = Path(config.output_dir) / sample_file_name(spec.label, config.sample_format)
    if sample_path.is_file():
        written_under = read_sidecar(sample_path).get("config_hash")
        if written_under == digest:
            return load_batch(sample_path)
        message = (
            f"samples at {sample_path} were written under config {str(written_under)[:12]}, "
            f"not the running config {digest[:12]}"
        )
        if not simulate:
            logger.error(message)
            raise CapacityError(message)
        logger.warning("%s; re-simulating", message)
    elif not simulate:
        message = f"no samples for {spec.label} at {sample_path} and simulation is disabled"
        logger.error(message)
        raise CapacityError(message)

    return sample_fn(
        spec,
        config.replicates,
        job_seed(config.seed, spec, "simulate"),
        block_size=config.block_size,
        jobs=config.jobs,
    )


def cmd_distance(config: ExperimentConfig, simulate: bool = True) -> int:
    """Distance reports from sample dumps, simulating the missing ones unless told not to."""
    _require_distance_replicates(config)
    _null_self_test(config)
    digest = config_hash(config)
    out = Path(config.output_dir)

    reports: list[DistanceReport] = []
    for spec in _specs(config):
        batch = _distance_batch(spec, config, digest, simulate)
        reports.append(
            distance_report(
                batch,
                cumulants_for(spec, config, batch),
                method=config.tv_method,
                grid_points=config.tv_grid,
                bias_allowance=config.bias_allowance,
            )
        )

    write_table(out / DISTANCES_FILE, "distances", DISTANCES_HEADER, distance_rows(reports), digest, config.seed)
    write_json(
        out / "distances.json",
        {"distances": [report.as_dict() for report in reports]},
        digest,
        config.seed,
    )
    return EXIT_OK


def cmd_rates(config: ExperimentConfig, simulate: bool = True) -> int:
    """Exponent fits and sandwich ratios over the whole grid."""
    if len(set(config.n_grid)) < MIN_FIT_POINTS:
        message = (
            f"rates need at least {MIN_FIT_POINTS} distinct n values to fit an exponent, "
            f"got {sorted(set(config.n_grid))}"
        )
        logger.error(message)
        raise ConfigError(message)
    if not is_geometric(sorted(config.n_grid)):
        logger.warning("n_grid %s is not geometric; proceeding", list(config.n_grid))
    if simulate:
        _require_distance_replicates(config)
        _null_self_test(config)

    digest = config_hash(config)
    out = Path(config.output_dir)
    result = run_grid(config.qs, config.hs, sorted(set(config.n_grid)), config, simulate=simulate)

    write_table(out / RATES_FILE, "rates_summary", RATES_HEADER, rate_rows(result.fits), digest, config.seed)
    write_table(out / SANDWICH_FILE, "sandwich", SANDWICH_HEADER, sandwich_rows(result.sandwich), digest, config.seed)
    write_table(out / CUMULANTS_FILE, "cumulants", CUMULANTS_HEADER, cumulant_rows(result.cumulants), digest, config.seed)
    write_table(out / FAILURES_FILE, "failures", FAILURES_HEADER, failure_rows(result.failures), digest, config.seed)
    if result.distances:
        write_table(
            out / DISTANCES_FILE, "distances", DISTANCES_HEADER, distance_rows(result.distances), digest, config.seed
        )
    write_json(out / "rates_flags.json", {"flags": result.flags}, digest, config.seed)
    return EXIT_OK


def cmd_stein_check(config: ExperimentConfig) -> int:
    """Write the Stein certificate; a failed check exits with the runtime code."""
    certificate = stein_certificate()
    write_json(Path(config.output_dir) / STEIN_FILE, certificate, config_hash(config), config.seed)
    if not certificate["passed"]:
        logger.error("Stein certificate failed; see %s", STEIN_FILE)
        return EXIT_RUNTIME
    return EXIT_OK


def _add_common(parser: argparse.ArgumentParser, default: object) -> None:
    parser.add_argument("--config", default=default, help="Flat key = value experiment file")
    parser.add_argument("--jobs", type=int, default=default, help="Worker threads")
    parser.add_argument("--seed", type=int, default=default, help="Unsigned 64-bit experiment seed")
    parser.add_argument("--output", default=default, help="Output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hermvar",
        description="Exact cumulants, simulation and distance-to-normal experiments for Hermite variations of fGn",
    )
    _add_common(parser, None)
    subparsers = parser.add_subparsers(dest="command", required=True)

    for name, help_text in (
        ("cumulants", "Exact kappa2, kappa3, kappa4 and M per spec"),
        ("simulate", "Dump Monte Carlo replicates of F_n per spec"),
        ("distance", "TV and Kolmogorov distances with their bounds"),
        ("rates", "Exponent fits and sandwich ratios over the grid"),
        ("stein-check", "Numerical Stein-equation certificate"),
    ):
        sub = subparsers.add_parser(name, help=help_text)
        _add_common(sub, argparse.SUPPRESS)
        if name in ("distance", "rates"):
            sub.add_argument(
                "--no-simulate",
                action="store_true",
                help="Fail instead of simulating missing samples (rates: skip distances)",
            )
    return parser


def _resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    config = load_config(args.config)
    return config.with_overrides(seed=args.seed, jobs=args.jobs, output_dir=args.output)


def main(argv: Sequence[str] | None = None) -> int:
    """Parse arguments, dispatch one subcommand and map failures to exit codes."""
    args = build_parser().parse_args(argv)
    logger.info("=== hermvar %s starting ===", args.command)

    try:
        config = _resolve_config(args)
        simulate = not getattr(args, "no_simulate", False)
        commands: dict[str, Callable[[], int]] = {
            "cumulants": lambda: cmd_cumulants(config),
            "simulate": lambda: cmd_simulate(config),
            "distance": lambda: cmd_distance(config, simulate=simulate),
            "rates": lambda: cmd_rates(config, simulate=simulate),
            "stein-check": lambda: cmd_stein_check(config),
        }
        code = commands[args.command]()
    except ConfigError as exc:
        logger.error("Configuration error: %s", exc)
        code = EXIT_CONFIG
    except HermvarError as exc:
        logger.error("%s failed: %s", args.command, exc)
        code = EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - top-level error handler
        logger.critical("Unhandled exception in %s: %s", args.command, exc, exc_info=True)
        code = EXIT_RUNTIME

    logger.info("=== hermvar %s finished with exit code %s ===", args.command, code)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
