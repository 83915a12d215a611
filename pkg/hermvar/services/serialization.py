"""Readers and writers for sample dumps and result tables."""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from ..exceptions import CapacityError, DomainError
from ..logging_config import get_logger
from ..models import CumulantReport, DistanceReport, RateFit, SampleBatch, SandwichRecord
from ..schemas import (
    CUMULANTS_HEADER,
    DISTANCES_HEADER,
    FAILURES_HEADER,
    PROVENANCE_LINE,
    PROVENANCE_PATTERN,
    RATES_HEADER,
    SAMPLE_FILE_PATTERN,
    SAMPLE_HEADER,
    SAMPLE_MAGIC,
    SAMPLES_CSV_HEADER,
    SANDWICH_HEADER,
    SCHEMA_VERSION,
)
from ..utils import atomic_write_bytes, atomic_write_text
from .covariance import build_spec

logger = get_logger(__name__)


def _cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else str(value)
    return str(value)


def _sidecar(path: Path) -> Path:
    return path.with_name(path.name + ".json")


def write_table(
    path: str | Path,
    table: str,
    header: Sequence[str],
    rows: Iterable[Sequence[Any]],
    config_hash: str,
    seed: int,
) -> Path:
    """Atomically write a provenance line followed by a CSV table."""
    buffer = io.StringIO()
    buffer.write(
        PROVENANCE_LINE.format(table=table, version=SCHEMA_VERSION, config_hash=config_hash, seed=seed)
    )
    buffer.write("\n")
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    count = 0
    for row in rows:
        writer.writerow([_cell(value) for value in row])
        count += 1
    target = atomic_write_text(path, buffer.getvalue())
    logger.info("Wrote %s rows to %s", count, target)
    return target


def read_table(path: str | Path) -> tuple[dict[str, str], list[dict[str, str]]]:
    """(provenance fields, rows) of a table written by :func:`write_table`."""
    source = Path(path)
    if not source.is_file():
        message = f"result table not found: {source}"
        logger.error(message)
        raise CapacityError(message)
    first, _, body = source.read_text(encoding="utf-8").partition("\n")
    match = PROVENANCE_PATTERN.match(first)
    if match is None:
        message = f"{source} does not start with a hermvar provenance line"
        logger.error(message)
        raise DomainError(message)
    rows = list(csv.DictReader(io.StringIO(body)))
    return match.groupdict(), rows


def _json_safe(value: Any) -> Any:
    # Strict JSON has no NaN or Infinity.
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {key: _json_safe(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(item) for item in value]
    return value


def write_json(path: str | Path, payload: dict[str, Any], config_hash: str, seed: int) -> Path:
    """Write a provenance-stamped JSON document; non-finite floats become null."""
    document = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash,
        "seed": seed,
        **payload,
    }
    text = json.dumps(_json_safe(document), indent=2, sort_keys=True, allow_nan=False)
    target = atomic_write_text(path, text + "\n")
    logger.info("Wrote JSON document %s", target)
    return target


def cumulant_rows(reports: Iterable[CumulantReport]) -> list[list[Any]]:
    rows = []
    for report in reports:
        data = report.as_dict()
        rows.append([data[column] for column in CUMULANTS_HEADER])
    return rows


def distance_rows(reports: Iterable[DistanceReport]) -> list[list[Any]]:
    rows = []
    for report in reports:
        spec = report.spec
        rows.append(
            [
                spec.q if spec else None,
                spec.hurst if spec else None,
                spec.n if spec else None,
                report.count,
                report.method,
                report.tv_density.value,
                report.tv_density.uncertainty,
                report.kolmogorov.value,
                report.kolmogorov.uncertainty,
                report.sin_gap.value,
                report.sin_gap.uncertainty,
                report.cos_gap.value,
                report.cos_gap.uncertainty,
                report.tv_lower_trig,
                report.fmt_upper,
                report.fmt_upper_simple,
                report.sandwich_ratio,
            ]
        )
    return rows


def rate_rows(fits: Iterable[RateFit]) -> list[list[Any]]:
    return [
        [
            fit.statistic,
            fit.q,
            fit.hurst,
            min(fit.n_grid),
            max(fit.n_grid),
            len(fit.n_grid),
            fit.used_points,
            fit.trimmed,
            fit.fitted_exponent,
            fit.stderr,
            fit.theoretical_exponent,
            fit.log_power,
            fit.regime_label,
        ]
        for fit in fits
    ]


def sandwich_rows(records: Iterable[SandwichRecord]) -> list[list[Any]]:
    return [
        [r.spec.q, r.spec.hurst, r.spec.n, r.m_stat, r.tv_estimate, r.ratio] for r in records
    ]


def failure_rows(failures: Iterable[dict[str, str]]) -> list[list[str]]:
    return [[failure.get(column, "") for column in FAILURES_HEADER] for failure in failures]


def write_batch(
    batch: SampleBatch,
    path: str | Path,
    config_hash: str,
    sample_format: str = "binary",
) -> Path:
    """Dump a batch of F_n replicates plus a JSON side-car with its provenance."""
    if batch.spec is None:
        message = "only batches generated from a VariationSpec can be dumped"
        logger.error(message)
        raise DomainError(message)
    spec = batch.spec
    target = Path(path)
    values = np.asarray(batch.replicates, dtype="<f8")

    if sample_format == "binary":
        header = SAMPLE_HEADER.pack(
            SAMPLE_MAGIC, SCHEMA_VERSION, spec.q, spec.n, batch.count, spec.hurst
        )
        atomic_write_bytes(target, header + values.tobytes())
    elif sample_format == "csv":
        write_table(
            target,
            "samples",
            SAMPLES_CSV_HEADER,
            enumerate(float(v) for v in values),
            config_hash,
            batch.seed,
        )
    else:
        message = f"unknown sample format {sample_format!r}"
        logger.error(message)
        raise DomainError(message)

    sidecar = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": config_hash,
        "seed": batch.seed,
        "format": sample_format,
        "count": batch.count,
        **spec.as_dict(),
    }
    atomic_write_text(_sidecar(target), json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    logger.info("Wrote %s replicates of %s to %s", batch.count, spec.label, target)
    return target


def read_sidecar(path: str | Path) -> dict[str, Any]:
    """Provenance side-car of a sample dump: config hash, seed, count, format and spec."""
    sidecar = _sidecar(Path(path))
    if not sidecar.is_file():
        message = f"sample side-car not found: {sidecar}"
        logger.error(message)
        raise CapacityError(message)
    return json.loads(sidecar.read_text(encoding="utf-8"))


def _check_file_name(source: Path, q: int, hurst: float, n: int) -> None:
    """A dump named like samples_q{q}_H{H}_n{n} must hold that spec."""
    match = SAMPLE_FILE_PATTERN.match(source.name)
    if match is None:
        return
    named = (int(match["q"]), float(match["hurst"]), int(match["n"]))
    if named[0] != q or named[2] != n or not math.isclose(named[1], hurst, rel_tol=1e-5):
        message = (
            f"{source.name} is named for q={named[0]} H={named[1]} n={named[2]} "
            f"but holds q={q} H={hurst} n={n}"
        )
        logger.error(message)
        raise DomainError(message)


def load_batch(path: str | Path) -> SampleBatch:
    """Read a dump written by :func:`write_batch`; the format is taken from the side-car."""
    source = Path(path)
    if not source.is_file():
        message = f"sample file not found: {source}"
        logger.error(message)
        raise CapacityError(message)
    meta = read_sidecar(source)

    if meta.get("format") == "binary":
        payload = source.read_bytes()
        if len(payload) < SAMPLE_HEADER.size:
            message = f"{source} is too short for a sample header"
            logger.error(message)
            raise DomainError(message)
        magic, version, q, n, count, hurst = SAMPLE_HEADER.unpack_from(payload)
        if magic != SAMPLE_MAGIC or version != SCHEMA_VERSION:
            message = f"{source} is not a version-{SCHEMA_VERSION} hermvar sample file"
            logger.error(message)
            raise DomainError(message)
        values = np.frombuffer(payload, dtype="<f8", offset=SAMPLE_HEADER.size).astype(np.float64)
        if values.size != count:
            message = f"{source} declares {count} replicates but holds {values.size}"
            logger.error(message)
            raise DomainError(message)
    else:
        _, rows = read_table(source)
        q, n, hurst = int(meta["q"]), int(meta["n"]), float(meta["H"])
        values = np.array([float(row["value"]) for row in rows], dtype=np.float64)

    _check_file_name(source, q, hurst, n)
    spec = build_spec(q, hurst, n)
    logger.info("Loaded %s replicates of %s from %s", values.size, spec.label, source)
    return SampleBatch(spec=spec, replicates=values, seed=int(meta["seed"]), count=int(values.size))


__all__ = [
    "cumulant_rows",
    "distance_rows",
    "failure_rows",
    "load_batch",
    "rate_rows",
    "read_sidecar",
    "read_table",
    "sandwich_rows",
    "write_batch",
    "write_json",
    "write_table",
]
