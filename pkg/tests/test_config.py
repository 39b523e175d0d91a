# tests/test_config.py

import json
import os

import pytest

from core.config import (
    apply_overrides,
    clear_settings_cache,
    config_from_data,
    configure_logging,
    get_settings,
    load_run_config,
    parse_override,
)
from core.context import get_run_default, use_run_defaults
from core.errors import ConfigError
from models.config import GridPoints, RunConfig


def test_defaults():
    config = load_run_config()
    assert config.model.d == 2 and config.model.alpha_prime == 0.5
    assert config.scheme.n == 1000 and config.scheme.spatial.kind == "grid"
    assert len(config.scheme.spatial.points(2)) == 81
    assert config.simulator.method == "truncation" and config.simulator.cutoff == 64
    assert config.estimation.estimators == ["sigma"]
    assert config.delta == 0.05
    assert config.workers is None and config.series_tol is None


def test_file_and_overrides(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"model": {"alpha_prime": 0.3, "nu": [1.0, 2.0]}, "seed": 4}))
    config = load_run_config(path, ["model.alpha_prime=0.4", "scheme.spatial.kind=named",
                                    'estimation.estimators=["sigma", "alpha"]', "output_dir=out"])
    assert config.params.alpha_prime == pytest.approx(0.4)
    assert config.params.nu == (1.0, 2.0)
    assert config.scheme.spatial.points(2) == ((0.1, 0.3), (0.4, 0.2), (0.7, 0.5))
    assert config.estimation.estimators == ["sigma", "alpha"]
    assert config.output_dir == "out" and config.seed == 4


def test_invalid_configurations_are_refused(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(overrides=["model.colour=blue"])
    with pytest.raises(ConfigError):
        load_run_config(overrides=["model.alpha_prime=1.5"])
    with pytest.raises(ConfigError):
        load_run_config(overrides=["simulator.method=replacement", "scheme.spatial.kind=named"])
    with pytest.raises(ConfigError):
        load_run_config(overrides=["simulator.method=replacement", "simulator.L=20", "simulator.K_v=10"])
    with pytest.raises(ConfigError):
        load_run_config(overrides=["scheme.n=999", 'estimation.estimators=["alpha"]'])
    with pytest.raises(ConfigError):
        load_run_config(overrides=["model.d=3"])
    with pytest.raises(ConfigError):
        load_run_config(tmp_path / "missing.json")
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    with pytest.raises(ConfigError):
        load_run_config(broken)
    listed = tmp_path / "list.json"
    listed.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        load_run_config(listed)


def test_parse_override():
    assert parse_override("a.b=3") == (["a", "b"], 3)
    assert parse_override("a=[1, 2]") == (["a"], [1, 2])
    assert parse_override("name=S3") == (["name"], "S3")
    assert parse_override("x=a=b") == (["x"], "a=b")
    with pytest.raises(ConfigError):
        parse_override("model.alpha_prime")
    with pytest.raises(ConfigError):
        parse_override("=1")
    with pytest.raises(ConfigError):
        apply_overrides({"seed": 1}, ["seed.value=2"])


def test_explicit_points_need_the_model_dimension():
    config = config_from_data({"scheme": {"spatial": {"kind": "explicit", "points": [[0.2, 0.3], [0.6, 0.7]]}}})
    assert config.scheme.spatial.points(2) == ((0.2, 0.3), (0.6, 0.7))
    with pytest.raises(ConfigError):
        config_from_data({"scheme": {"spatial": {"kind": "explicit", "points": [[0.2, 0.3, 0.4]]}}})
    with pytest.raises(ConfigError):
        config_from_data([1, 2])


def test_config_from_data_does_not_touch_its_input():
    data = {"model": {"alpha_prime": 0.3}}
    config = config_from_data(data, ["model.alpha_prime=0.6"])
    assert config.params.alpha_prime == pytest.approx(0.6)
    assert data == {"model": {"alpha_prime": 0.3}}


def test_grid_points_respect_the_margin():
    assert len(GridPoints(M=10, delta=0.1).points(2)) == 81
    assert len(GridPoints(M=10, delta=0.15).points(2)) == 49
    assert GridPoints(M=4, delta=0.2).points(2)[0] == (0.25, 0.25)


def test_estimation_delta_overrides_the_scheme_delta():
    config = RunConfig.model_validate({"estimation": {"delta": 0.2}})
    assert config.delta == 0.2


def test_settings_from_the_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("SPDE_WORKERS", "3")
    monkeypatch.setenv("SPDE_SERIES_TOL", "1e-9")
    monkeypatch.setenv("SPDE_LOG_LEVEL", "info")
    settings = get_settings()
    assert settings.workers == 3 and settings.series_tol == 1e-9 and settings.log_level == "INFO"
    assert settings.cache_dir == str(tmp_path / "cache")
    assert get_settings() is settings

    clear_settings_cache()
    monkeypatch.setenv("SPDE_WORKERS", "many")
    with pytest.raises(ConfigError):
        get_settings()
    clear_settings_cache()
    monkeypatch.setenv("SPDE_WORKERS", "0")
    with pytest.raises(ConfigError):
        get_settings()


def test_env_file_is_read(tmp_path):
    env_file = tmp_path / "run.env"
    env_file.write_text("SPDE_BUDGET=12345\n")
    assert get_settings(str(env_file)).budget == 12345.0
    os.environ.pop("SPDE_BUDGET", None)


def test_configure_logging_rejects_unknown_levels():
    configure_logging("debug")
    with pytest.raises(ConfigError):
        configure_logging("chatty")
    configure_logging("warning")


def test_use_run_defaults_fills_missing_knobs(monkeypatch):
    monkeypatch.setenv("SPDE_BUDGET", "500")

    @use_run_defaults
    def knobs(x, budget=None, workers=None):
        return x, budget, workers

    assert knobs(1) == (1, 500.0, 1)
    assert knobs(1, budget=7.0) == (1, 7.0, 1)
    assert knobs(1, None, 4) == (1, 500.0, 4)
    assert get_run_default("series_tol") == 1e-10
    with pytest.raises(KeyError):
        get_run_default("colour")
