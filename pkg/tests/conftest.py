from __future__ import annotations

import os

# Keep test runs from creating log files; must happen before hermvar is imported.
os.environ["HERMVAR_LOG_DIR"] = ""

import pytest

from hermvar.config import ExperimentConfig
from hermvar.services.covariance import build_spec
from hermvar.services.sampler import standard_normal_batch


@pytest.fixture
def normal_batch():
    return standard_normal_batch(200_000, seed=2024)


@pytest.fixture
def shifted_batch():
    return standard_normal_batch(200_000, seed=2025, shift=1.0)


@pytest.fixture
def small_specs():
    return [build_spec(q, h, n) for q in (2, 3) for h in (0.5, 0.7) for n in (8, 16, 32)]


@pytest.fixture
def output_dir(tmp_path):
    path = tmp_path / "results"
    path.mkdir()
    return path


@pytest.fixture
def small_config(output_dir):
    return ExperimentConfig(
        qs=(2,),
        hs=(0.5,),
        n_grid=(8, 16, 32, 64, 128),
        replicates=20_000,
        seed=7,
        output_dir=str(output_dir),
        min_replicates=20_000,
        max_replicates=50_000,
        bias_allowance=0.05,
    )
