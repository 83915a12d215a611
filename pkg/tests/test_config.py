from __future__ import annotations

import pytest

from hermvar.config import ExperimentConfig, config_hash, load_config, parse_config_text
from hermvar.exceptions import ConfigError


def test_parse_flat_file():
    config = parse_config_text(
        """
        # small run
        qs = 2, 3
        hs = 0.6
        n_grid = 16, 32, 64
        replicates = 5000   # per spec
        tv_method = "histogram"
        """
    )
    assert config.qs == (2, 3)
    assert config.hs == (0.6,)
    assert config.n_grid == (16, 32, 64)
    assert config.replicates == 5000
    assert config.tv_method == "histogram"
    assert config.seed == ExperimentConfig().seed


@pytest.mark.parametrize(
    "text",
    [
        "colour = blue",
        "seed = 1\nseed = 2",
        "replicates 5",
        "replicates = many",
        "hs =",
        "hs = 1.2",
        "qs = 1",
        "replicates = 0",
        "tv_method = wasserstein",
        "seed = -1",
    ],
)
def test_invalid_config_text(text):
    with pytest.raises(ConfigError):
        parse_config_text(text)


def test_config_error_is_a_value_error():
    assert issubclass(ConfigError, ValueError)


def test_load_config(tmp_path):
    assert load_config(None) == ExperimentConfig()
    path = tmp_path / "experiment.cfg"
    path.write_text("qs = 4\nseed = 99\n", encoding="utf-8")
    config = load_config(path)
    assert config.qs == (4,)
    assert config.seed == 99
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.cfg")


def test_hash_is_stable_and_ignores_placement():
    base = ExperimentConfig()
    assert config_hash(base) == config_hash(ExperimentConfig())
    assert len(config_hash(base)) == 64
    moved = base.with_overrides(output_dir="elsewhere", jobs=8)
    assert config_hash(moved) == config_hash(base)
    assert config_hash(base.with_overrides(seed=1)) != config_hash(base)


def test_overrides_skip_none_and_validate():
    base = ExperimentConfig()
    assert base.with_overrides(seed=None, jobs=None) == base
    assert base.with_overrides(jobs=3).jobs == 3
    with pytest.raises(ConfigError):
        base.with_overrides(jobs=0)
    with pytest.raises(ConfigError):
        base.with_overrides(min_replicates=2_000_000)


def test_as_dict_uses_lists():
    data = ExperimentConfig().as_dict()
    assert data["qs"] == [2, 3]
    assert data["hs"] == [0.5, 0.7]
