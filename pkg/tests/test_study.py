# tests/test_study.py

import json
import math

import numpy as np
import pandas as pd
import pytest

from core.config import config_from_data
from core.errors import ConfigError, MetadataMismatch
from core.study import (
    CSV_COLUMNS,
    check_metadata,
    compute_constants,
    estimation_points,
    read_sample,
    resolve_config,
    run_build_cache,
    run_estimate,
    run_mc,
    run_simulate,
    simulation_points,
    theoretical_values,
)
from core.model import rescaling_constant_K, upsilon


def small_config(*overrides, **sections):
    base = {
        "scheme": {"n": 200, "spatial": {"kind": "grid", "M": 4, "delta": 0.2}},
        "simulator": {"cutoff": 6, "initial": "stationary"},
        "seed": 17,
    }
    base.update(sections)
    return config_from_data(base, overrides)


def test_resolve_config_fills_only_unset_knobs(tmp_path):
    config = resolve_config(small_config("budget=1000"))
    assert config.budget == 1000.0
    assert config.series_tol == 1e-10 and config.workers == 1
    assert config.cache_dir == str(tmp_path / "cache")


def test_simulate_writes_a_reproducible_field(tmp_path):
    config = small_config()
    first = run_simulate(config, tmp_path / "a")
    second = run_simulate(config, tmp_path / "b")
    assert first.name == "field.json"
    assert (tmp_path / "a" / "field.csv").read_bytes() == (tmp_path / "b" / "field.csv").read_bytes()
    assert first.read_bytes() == second.read_bytes()

    meta = json.loads(first.read_text())
    assert meta["config"]["seed"] == 17 and meta["config"]["series_tol"] == 1e-10
    assert meta["sample"]["method"] == "truncation"
    sample = read_sample(first)
    assert sample.values.shape == (201, 9)
    assert sample.params == config.params and sample.seed == 17
    assert sample.settings == {"cutoff": 6, "initial": "stationary"}


def test_simulate_as_npy_and_with_zero_volatility(tmp_path):
    config = small_config("field_format=npy", "model.sigma=0")
    path = run_simulate(config, tmp_path)
    assert (tmp_path / "field.npy").exists()
    assert np.all(read_sample(path).values == 0.0)


def test_simulation_points_add_the_log_linear_points():
    config = small_config(estimation={"log_linear_points": {"kind": "named", "name": "S3"}})
    points = simulation_points(config)
    assert len(points) == 12 and points[-3:] == ((0.1, 0.3), (0.4, 0.2), (0.7, 0.5))


def test_estimate_writes_reports_with_constants(tmp_path):
    config = small_config('estimation.estimators=["sigma", "sigma_point", "quarticity", "alpha"]')
    sample_path = run_simulate(config, tmp_path / "field")
    path = run_estimate(config, sample_path, tmp_path / "est")
    data = json.loads(path.read_text())
    assert set(data) == {"config", "sample", "scheme", "reports"}
    sigma = data["reports"]["sigma"]
    assert sigma["constants"]["K"] == pytest.approx(rescaling_constant_K(config.params))
    assert sigma["constants"]["upsilon"] == pytest.approx(upsilon(0.5))
    assert sigma["components"]["sigma_sq"]["value"] > 0.0
    assert data["scheme"]["m"] == 9
    assert math.isfinite(data["reports"]["alpha"]["components"]["alpha_prime"]["value"])


def test_estimate_on_the_log_linear_points(tmp_path):
    config = small_config('estimation.estimators=["log_linear"]',
                          estimation={"log_linear_points": {"kind": "named", "name": "S3"}, "delta": 0.05})
    sample_path = run_simulate(config, tmp_path)
    data = json.loads(run_estimate(config, sample_path, tmp_path).read_text())
    assert data["reports"]["log_linear"]["diagnostics"]["scheme"]["m"] == 3
    assert abs(data["reports"]["log_linear"]["diagnostics"]["scheme"]["determinant"]) == pytest.approx(0.12)


def test_metadata_must_agree_with_the_known_parameters(tmp_path):
    config = small_config()
    sample = read_sample(run_simulate(config, tmp_path))
    check_metadata(sample, config)
    with pytest.raises(MetadataMismatch) as info:
        check_metadata(sample, small_config("model.alpha_prime=0.3"))
    assert info.value.exit_code == 4
    with pytest.raises(MetadataMismatch):
        check_metadata(sample, small_config("model.nu=[1.0, 0.0]"))
    with pytest.raises(MetadataMismatch):
        run_estimate(small_config("model.eta=2.0"), tmp_path / "field.json", tmp_path)
    # the damping estimator claims nothing; plug-in runs do not rely on the configured alpha'
    check_metadata(sample, small_config("model.alpha_prime=0.3", 'estimation.estimators=["alpha"]'))
    check_metadata(sample, small_config("model.alpha_prime=0.3", "estimation.plug_in_alpha=true"))


def test_constants_record():
    config = small_config("model.alpha_prime=0.4", "model.nu=[5.0, 0.0]")
    record = compute_constants(config.params, 1e-10, [0.5, 0.5], 10_000)
    assert record["Delta"] == 1e-4
    assert record["mean_sq_increment"] == pytest.approx(10 ** -1.6 * math.exp(-2.5) * record["K"])
    assert record["autocorrelation_lag1"] == pytest.approx(2.0 ** -0.6 - 1.0)
    assert record["kappa"] == [5.0, 0.0]
    assert compute_constants(config.params, 1e-10)["y"] == [0.5, 0.5]


def test_theoretical_values_follow_the_scheme():
    config = resolve_config(small_config('estimation.estimators=["sigma", "alpha", "log_linear"]'))
    theory = theoretical_values(config)
    m = len(estimation_points(config))
    assert m == 9
    truth, variance = theory[("sigma", "sigma_sq")]
    assert truth == 1.0 and variance == pytest.approx(upsilon(0.5) / (200 * 9))
    assert theory[("alpha", "alpha_prime")][0] == 0.5
    assert theory[("log_linear", "kappa_1")][0] == 0.0
    assert theory[("quarticity", "sigma4")] == (1.0, None)


def test_monte_carlo_table_and_summary(tmp_path):
    config = small_config('estimation.estimators=["sigma", "alpha"]', "replications=3")
    csv_path, summary_path, study = run_mc(config, tmp_path)
    table = pd.read_csv(csv_path)
    assert list(table.columns) == CSV_COLUMNS
    assert sorted(table["run_id"].unique()) == [0, 1, 2]
    assert set(table["estimator"]) == {"sigma", "alpha"}
    assert (table["seed"] == 17).all()
    assert study.complete and study.succeeded == 3
    entry = study.entry("sigma", "sigma_sq")
    assert entry.summary.count == 3 and entry.with_interval == 3
    assert entry.theoretical_variance == pytest.approx(upsilon(0.5) / (200 * 9))
    written = json.loads(summary_path.read_text())
    assert written["config"]["replications"] == 3 and written["complete"]
    assert written["csv"] == csv_path.name == "mc_estimates.csv"


def test_monte_carlo_is_independent_of_the_worker_count(tmp_path):
    config = small_config("replications=4")
    serial, _, _ = run_mc(config, tmp_path / "serial", workers=1)
    parallel, _, _ = run_mc(config.model_copy(update={"workers": 2}), tmp_path / "parallel")
    assert serial.read_bytes() == parallel.read_bytes()


def test_single_replication_has_no_variance(tmp_path):
    _, summary_path, study = run_mc(small_config(), tmp_path)
    assert study.entry("sigma", "sigma_sq").summary.variance is None
    entries = json.loads(summary_path.read_text())["entries"]
    assert entries[0]["summary"]["variance"] is None


def test_failed_replications_are_recorded(tmp_path):
    config = small_config('estimation.estimators=["log_linear"]', "replications=2",
                          scheme={"n": 50, "spatial": {"kind": "explicit", "points": [[0.1, 0.1], [0.4, 0.4], [0.7, 0.7]]}})
    csv_path, _, study = run_mc(config, tmp_path)
    assert not study.complete and study.succeeded == 0
    assert [r for r, _ in study.failures] == [0, 1]
    assert "FullRankViolation" in study.failures[0][1]
    assert pd.read_csv(csv_path).empty


def test_replacement_monte_carlo_builds_its_cache(tmp_path):
    config = small_config("simulator.method=replacement", "simulator.L=2", "simulator.K_v=6", "replications=2",
                          scheme={"n": 100, "spatial": {"kind": "grid", "M": 4, "delta": 0.2}})
    _, _, study = run_mc(config, tmp_path / "out")
    assert study.complete
    assert list((tmp_path / "cache").glob("*.json"))
    built = run_build_cache(config)
    assert built["entries"] == 9 and built["key"]["K_v"] == 6


def test_cache_build_needs_a_grid():
    with pytest.raises(ConfigError):
        run_build_cache(small_config(scheme={"n": 10, "spatial": {"kind": "named", "name": "S3"}}))
