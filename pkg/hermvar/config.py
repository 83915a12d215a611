"""Configuration helpers: environment defaults and experiment config files."""
from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable, NoReturn

from .exceptions import ConfigError
from .logging_config import get_logger

logger = get_logger(__name__)

EXACT_N_CAP = int(os.getenv("HERMVAR_EXACT_N_CAP", "512"))
OUTPUT_DIR = os.getenv("HERMVAR_OUTPUT_DIR", "results")
BLOCK_SIZE = int(os.getenv("HERMVAR_BLOCK_SIZE", "1024"))
JOBS = int(os.getenv("HERMVAR_JOBS", "1"))

TV_METHODS = ("kde", "histogram")
SAMPLE_FORMATS = ("binary", "csv")
MIN_DISTANCE_REPLICATES = 10_000

# Keys that do not influence any numeric payload and so stay out of the hash.
_UNHASHED_KEYS = ("output_dir", "jobs")


@dataclass(frozen=True)
class ExperimentConfig:
    qs: tuple[int, ...] = (2, 3)
    hs: tuple[float, ...] = (0.5, 0.7)
    n_grid: tuple[int, ...] = (32, 64, 128, 256, 512)
    replicates: int = 100_000
    seed: int = 12345
    exact_n_cap: int = EXACT_N_CAP
    output_dir: str = OUTPUT_DIR
    tv_method: str = "kde"
    block_size: int = BLOCK_SIZE
    jobs: int = JOBS
    sample_format: str = "binary"
    tv_grid: int = 4096
    min_replicates: int = 100_000
    max_replicates: int = 1_000_000
    bias_allowance: float = 0.01

    def with_overrides(self, **overrides: Any) -> "ExperimentConfig":
        """Return a validated copy with the non-None overrides applied."""
        changes = {key: value for key, value in overrides.items() if value is not None}
        updated = dataclasses.replace(self, **changes)
        validate_config(updated)
        return updated

    def as_dict(self) -> dict[str, Any]:
        data = dataclasses.asdict(self)
        for key, value in data.items():
            if isinstance(value, tuple):
                data[key] = list(value)
        return data


def _int_list(raw: str) -> tuple[int, ...]:
    return tuple(int(item) for item in raw.split(",") if item.strip())


def _float_list(raw: str) -> tuple[float, ...]:
    return tuple(float(item) for item in raw.split(",") if item.strip())


def _string(raw: str) -> str:
    return raw.strip().strip('"').strip("'")


_SCHEMA: dict[str, Callable[[str], Any]] = {
    "qs": _int_list,
    "hs": _float_list,
    "n_grid": _int_list,
    "replicates": int,
    "seed": int,
    "exact_n_cap": int,
    "output_dir": _string,
    "tv_method": _string,
    "block_size": int,
    "jobs": int,
    "sample_format": _string,
    "tv_grid": int,
    "min_replicates": int,
    "max_replicates": int,
    "bias_allowance": float,
}


def _fail(message: str) -> NoReturn:
    logger.error(message)
    raise ConfigError(message)


def validate_config(config: ExperimentConfig) -> None:
    """Check the invariants of an experiment configuration."""
    if not config.qs or not config.hs or not config.n_grid:
        _fail("qs, hs and n_grid must all be non-empty")
    if any(q < 2 for q in config.qs):
        _fail(f"every Hermite degree must be >= 2, got {list(config.qs)}")
    if any(not 0.0 < h < 1.0 for h in config.hs):
        _fail(f"every Hurst index must lie in (0, 1), got {list(config.hs)}")
    if any(n < 1 for n in config.n_grid):
        _fail(f"every sample size must be >= 1, got {list(config.n_grid)}")
    if config.replicates < 1:
        _fail(f"replicates must be >= 1, got {config.replicates}")
    if not 0 <= config.seed < 2**64:
        _fail(f"seed must be an unsigned 64-bit integer, got {config.seed}")
    if config.exact_n_cap < 1:
        _fail(f"exact_n_cap must be >= 1, got {config.exact_n_cap}")
    if config.tv_method not in TV_METHODS:
        _fail(f"tv_method must be one of {TV_METHODS}, got {config.tv_method!r}")
    if config.sample_format not in SAMPLE_FORMATS:
        _fail(f"sample_format must be one of {SAMPLE_FORMATS}, got {config.sample_format!r}")
    if config.block_size < 2:
        _fail(f"block_size must be >= 2, got {config.block_size}")
    if config.jobs < 1:
        _fail(f"jobs must be >= 1, got {config.jobs}")
    if config.tv_grid < 16:
        _fail(f"tv_grid must be >= 16, got {config.tv_grid}")
    if not 1 <= config.min_replicates <= config.max_replicates:
        _fail("min_replicates must be positive and not exceed max_replicates")
    if config.bias_allowance <= 0:
        _fail(f"bias_allowance must be positive, got {config.bias_allowance}")


def parse_config_text(text: str, source: str = "<string>") -> ExperimentConfig:
    """Parse the flat ``key = value`` format, rejecting unknown or repeated keys."""
    values: dict[str, Any] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            _fail(f"{source}:{lineno}: expected 'key = value', got {raw_line!r}")
        key, raw_value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA:
            _fail(f"{source}:{lineno}: unknown key {key!r}")
        if key in values:
            _fail(f"{source}:{lineno}: duplicated key {key!r}")
        try:
            values[key] = _SCHEMA[key](raw_value)
        except ValueError as exc:
            _fail(f"{source}:{lineno}: cannot parse {key!r}: {exc}")

    config = ExperimentConfig(**values)
    validate_config(config)
    logger.debug("Loaded configuration from %s with keys %s", source, sorted(values))
    return config


def load_config(path: str | os.PathLike[str] | None) -> ExperimentConfig:
    """Load a configuration file, or the defaults when ``path`` is None."""
    if path is None:
        config = ExperimentConfig()
        validate_config(config)
        return config

    config_path = Path(path)
    if not config_path.is_file():
        _fail(f"configuration file not found: {config_path}")
    return parse_config_text(config_path.read_text(encoding="utf-8"), str(config_path))


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON of every result-relevant config field."""
    payload = config.as_dict()
    for key in _UNHASHED_KEYS:
        payload.pop(key, None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


__all__ = [
    "EXACT_N_CAP",
    "ExperimentConfig",
    "MIN_DISTANCE_REPLICATES",
    "SAMPLE_FORMATS",
    "TV_METHODS",
    "config_hash",
    "load_config",
    "parse_config_text",
    "validate_config",
]
