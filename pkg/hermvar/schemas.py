"""Output file layouts shared by the serializers and the command line."""
from __future__ import annotations

import re
import struct

SCHEMA_VERSION = 1

CUMULANTS_HEADER = (
    "q", "H", "n", "v_n", "kappa2", "kappa3", "kappa4", "m_stat", "source", "kappa3_se", "kappa4_se",
)

DISTANCES_HEADER = (
    "q", "H", "n", "count", "method",
    "tv", "tv_se", "kolmogorov", "kolmogorov_band",
    "sin_gap", "sin_gap_se", "cos_gap", "cos_gap_se",
    "tv_lower_trig", "fmt_upper", "fmt_upper_simple", "sandwich_ratio",
)

RATES_HEADER = (
    "statistic", "q", "H", "n_min", "n_max", "points", "used_points", "trimmed",
    "fitted_exponent", "stderr", "theoretical_exponent", "log_power", "regime",
)

SANDWICH_HEADER = ("q", "H", "n", "m_stat", "tv_estimate", "ratio")

FAILURES_HEADER = ("q", "H", "n", "stage", "error")

SAMPLES_CSV_HEADER = ("index", "value")

# First line of every CSV output; the rest of the file is plain CSV.
PROVENANCE_LINE = "# hermvar {table} v{version} config_hash={config_hash} seed={seed}"
PROVENANCE_PATTERN = re.compile(
    r"^# hermvar (?P<table>\w+) v(?P<version>\d+) config_hash=(?P<config_hash>[0-9a-f]+) seed=(?P<seed>\d+)$"
)

# Binary sample dump: magic, format version, q, n, count, H, padding to 32 bytes.
SAMPLE_MAGIC = b"HVAR"
SAMPLE_HEADER = struct.Struct("<4sHHIQd4x")

SAMPLE_FILE_PATTERN = re.compile(
    r"^samples_q(?P<q>\d+)_H(?P<hurst>[0-9.e+-]+)_n(?P<n>\d+)\.(?P<ext>hvar|csv)$"
)

CUMULANTS_FILE = "cumulants.csv"
DISTANCES_FILE = "distances.csv"
RATES_FILE = "rates_summary.csv"
SANDWICH_FILE = "sandwich.csv"
FAILURES_FILE = "failures.csv"
STEIN_FILE = "stein_certificate.json"


def sample_file_name(label: str, sample_format: str) -> str:
    return f"samples_{label}.{'hvar' if sample_format == 'binary' else 'csv'}"


__all__ = [
    "CUMULANTS_FILE",
    "CUMULANTS_HEADER",
    "DISTANCES_FILE",
    "DISTANCES_HEADER",
    "FAILURES_FILE",
    "FAILURES_HEADER",
    "PROVENANCE_LINE",
    "PROVENANCE_PATTERN",
    "RATES_FILE",
    "RATES_HEADER",
    "SAMPLES_CSV_HEADER",
    "SAMPLE_FILE_PATTERN",
    "SAMPLE_HEADER",
    "SAMPLE_MAGIC",
    "SANDWICH_FILE",
    "SANDWICH_HEADER",
    "SCHEMA_VERSION",
    "STEIN_FILE",
    "sample_file_name",
]
