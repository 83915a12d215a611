from __future__ import annotations

import json
import math

import numpy as np
import pytest

from hermvar.exceptions import CapacityError, DomainError
from hermvar.schemas import (
    CUMULANTS_HEADER,
    SAMPLE_FILE_PATTERN,
    SAMPLE_HEADER,
    SCHEMA_VERSION,
    sample_file_name,
)
from hermvar.services.covariance import build_spec
from hermvar.services.diagrams import exact_cumulants
from hermvar.services.sampler import sample_fn, standard_normal_batch
from hermvar.services.serialization import (
    cumulant_rows,
    load_batch,
    read_sidecar,
    read_table,
    write_batch,
    write_json,
    write_table,
)

HASH = "ab" * 32


@pytest.fixture
def batch():
    return sample_fn(build_spec(3, 0.7, 16), 2000, seed=42)


def test_binary_dump_layout(batch, output_dir):
    path = write_batch(batch, output_dir / sample_file_name(batch.spec.label, "binary"), HASH)
    payload = path.read_bytes()
    assert SAMPLE_HEADER.size == 32
    assert len(payload) == 32 + 8 * batch.count
    magic, version, q, n, count, hurst = SAMPLE_HEADER.unpack_from(payload)
    assert (magic, version, q, n, count, hurst) == (b"HVAR", SCHEMA_VERSION, 3, 16, 2000, 0.7)

    loaded = load_batch(path)
    assert loaded.spec == batch.spec
    assert loaded.seed == 42
    assert loaded.replicates.tobytes() == batch.replicates.tobytes()

    sidecar = json.loads((output_dir / (path.name + ".json")).read_text())
    assert sidecar["config_hash"] == HASH
    assert sidecar["format"] == "binary"
    assert sidecar["count"] == 2000
    assert read_sidecar(path) == sidecar


def test_csv_dump_is_exact(batch, output_dir):
    path = write_batch(batch, output_dir / sample_file_name(batch.spec.label, "csv"), HASH, "csv")
    provenance, rows = read_table(path)
    assert provenance["table"] == "samples"
    assert len(rows) == batch.count
    np.testing.assert_array_equal(load_batch(path).replicates, batch.replicates)


def test_sample_file_names_follow_pattern():
    name = sample_file_name(build_spec(2, 0.65, 128).label, "binary")
    assert name == "samples_q2_H0.65_n128.hvar"
    match = SAMPLE_FILE_PATTERN.match(name)
    assert match is not None
    assert match.group("hurst") == "0.65"
    assert sample_file_name("q2_H0.5_n8", "csv").endswith(".csv")


def test_corrupted_dumps_are_rejected(batch, output_dir):
    path = write_batch(batch, output_dir / "samples.hvar", HASH)
    payload = bytearray(path.read_bytes())
    path.write_bytes(b"XXXX" + bytes(payload[4:]))
    with pytest.raises(DomainError):
        load_batch(path)
    path.write_bytes(bytes(payload[:-8]))
    with pytest.raises(DomainError):
        load_batch(path)


def test_renamed_dumps_are_rejected(batch, output_dir):
    path = write_batch(batch, output_dir / sample_file_name(batch.spec.label, "binary"), HASH)
    assert path.name == "samples_q3_H0.7_n16.hvar"
    renamed = output_dir / "samples_q3_H0.7_n32.hvar"
    path.rename(renamed)
    (output_dir / (path.name + ".json")).rename(output_dir / (renamed.name + ".json"))
    with pytest.raises(DomainError):
        load_batch(renamed)


def test_missing_files_are_capacity_errors(batch, output_dir):
    with pytest.raises(CapacityError):
        load_batch(output_dir / "absent.hvar")
    path = write_batch(batch, output_dir / "orphan.hvar", HASH)
    (output_dir / "orphan.hvar.json").unlink()
    with pytest.raises(CapacityError):
        load_batch(path)
    with pytest.raises(CapacityError):
        read_table(output_dir / "absent.csv")


def test_reference_batches_cannot_be_dumped(output_dir):
    with pytest.raises(DomainError):
        write_batch(standard_normal_batch(100, seed=1), output_dir / "normal.hvar", HASH)


def test_table_provenance_and_cells(output_dir):
    report = exact_cumulants(build_spec(2, 0.5, 10))
    path = write_table(output_dir / "cumulants.csv", "cumulants", CUMULANTS_HEADER, cumulant_rows([report]), HASH, 12345)
    first_line = path.read_text().splitlines()[0]
    assert first_line == f"# hermvar cumulants v{SCHEMA_VERSION} config_hash={HASH} seed=12345"

    provenance, rows = read_table(path)
    assert provenance == {"table": "cumulants", "version": str(SCHEMA_VERSION), "config_hash": HASH, "seed": "12345"}
    (row,) = rows
    assert tuple(row) == CUMULANTS_HEADER
    assert float(row["kappa3"]) == report.kappa3
    assert float(row["kappa4"]) == pytest.approx(1.2)
    assert row["source"] == "exact"


def test_special_cells(output_dir):
    path = write_table(output_dir / "t.csv", "misc", ("a", "b", "c"), [[None, True, math.nan]], HASH, 1)
    _, rows = read_table(path)
    assert rows == [{"a": "", "b": "true", "c": "nan"}]


def test_table_without_provenance_is_rejected(output_dir):
    path = output_dir / "plain.csv"
    path.write_text("q,H\n2,0.5\n")
    with pytest.raises(DomainError):
        read_table(path)


def test_json_documents_carry_provenance(output_dir):
    path = write_json(output_dir / "doc.json", {"values": [1, 2]}, HASH, 5)
    document = json.loads(path.read_text())
    assert document == {"schema_version": SCHEMA_VERSION, "config_hash": HASH, "seed": 5, "values": [1, 2]}


def test_json_documents_write_non_finite_values_as_null(output_dir):
    path = write_json(output_dir / "doc.json", {"ratio": math.nan, "values": [1.0, math.inf]}, HASH, 5)
    text = path.read_text()
    assert "NaN" not in text and "Infinity" not in text
    document = json.loads(text)
    assert document["ratio"] is None
    assert document["values"] == [1.0, None]
