# tests/test_acceptance.py
# Desk-scale reproductions of the Monte Carlo studies. They take minutes and are
# deselected by default; run them with `uv run pytest -m slow`.

import math

import numpy as np
import pytest

from conftest import interior_grid, synthetic_field
from core.estimate import KnownParameters, estimate_alpha, estimate_sigma_pooled, log_linear_fit
from core.model import (
    rescaling_constant_K,
    spatial_tilt,
    truncated_increment_autocovariance,
    truncated_mean_sq_increment,
    upsilon,
)
from core.numerics import RngStream
from core.simulate import build_cache, simulate_replacement, simulate_truncation
from models.params import ModelParams
from models.sample import ReplacementSettings, TruncationSettings

pytestmark = pytest.mark.slow


def test_truncation_reproduces_increment_moments(tilted_params):
    y, n, cutoff, R = (0.5, 0.5), 4000, 64, 500
    settings = TruncationSettings(cutoff, "stationary")
    mean_sq, lag_products, squares = [], 0.0, 0.0
    for r in range(R):
        increments = simulate_truncation(tilted_params, n, [y], settings, RngStream(2024, (r,))).increments()[:, 0]
        mean_sq.append(np.mean(increments ** 2))
        lag_products += float(np.sum(increments[1:] * increments[:-1]))
        squares += float(np.sum(increments[:-1] ** 2))
    Delta = 1.0 / n
    variance = truncated_mean_sq_increment(tilted_params, y, Delta, cutoff)
    assert np.mean(mean_sq) == pytest.approx(variance, rel=0.05)
    expected_rho = truncated_increment_autocovariance(tilted_params, y, Delta, cutoff, 1) / variance
    assert lag_products / squares == pytest.approx(expected_rho, abs=0.02)


def test_replacement_bias_shrinks_with_the_variance_cutoff(tmp_path):
    params = ModelParams(2, 0.0, (0.0, 0.0), 1.0, 1.0, 0.4)
    n, R = 2000, 40
    points = interior_grid(10)
    K = rescaling_constant_K(params)
    scale = np.array([K * math.exp(-spatial_tilt(params, p)) * (1.0 / n) ** 0.4 * n for p in points])
    bias = {}
    for K_v in (20, 100, 500):
        settings = ReplacementSettings(M=10, L=5, K_v=K_v)
        cache = build_cache(params, settings, tmp_path, workers=4)
        # same streams for every K_v: only the replacement variances differ
        ratios = []
        for r in range(R):
            sample = simulate_replacement(params, n, settings, cache, RngStream(99, (r,)), points=points)
            ratios.append(np.mean(np.sum(sample.increments() ** 2, axis=0) / scale))
        bias[K_v] = float(np.mean(ratios)) - 1.0
    assert bias[20] < bias[100] < bias[500] < 0.0
    assert abs(bias[20]) > abs(bias[100]) > abs(bias[500])


def test_volatility_clt(params):
    n, R = 4000, 500
    points = interior_grid(10)
    m = len(points)
    rng = np.random.default_rng(31)
    known = KnownParameters.from_params(params)
    estimates = np.array([
        estimate_sigma_pooled(synthetic_field(params, n, points, rng=rng, delta=0.05), known).value("sigma_sq")
        for _ in range(R)
    ])
    se = estimates.std(ddof=1) / math.sqrt(R)
    assert abs(estimates.mean() - 1.0) < 3.0 * se
    assert np.var(math.sqrt(n * m) * (estimates - 1.0), ddof=1) == pytest.approx(upsilon(0.5), rel=0.25)


def test_natural_parameters_on_three_points(s3_points):
    params = ModelParams(2, 0.0, (6.0, 0.0), 1.0, 1.0, 0.4)
    rng = np.random.default_rng(5)
    known = KnownParameters(alpha_prime=0.4)
    fits = [log_linear_fit(synthetic_field(params, 10_000, s3_points, rng=rng, delta=0.05), known)
            for _ in range(200)]
    assert np.median([f.value("sigma0_sq") for f in fits]) == pytest.approx(1.0, abs=0.05)
    assert np.median([f.value("kappa_1") for f in fits]) == pytest.approx(6.0, abs=0.15)
    assert np.median([f.value("kappa_2") for f in fits]) == pytest.approx(0.0, abs=0.10)


@pytest.mark.parametrize("alpha_prime", [0.4, 0.5, 0.6])
def test_damping_recovery(alpha_prime):
    params = ModelParams(2, 0.0, (0.0, 0.0), 1.0, 1.0, alpha_prime)
    rng = np.random.default_rng(int(alpha_prime * 10))
    points = interior_grid(10)
    estimates = [estimate_alpha(synthetic_field(params, 8000, points, rng=rng, delta=0.05)).value("alpha_prime")
                 for _ in range(20)]
    assert np.median(estimates) == pytest.approx(alpha_prime, abs=0.04)


# The same studies on simulated SPDE output. The replacement field carries the
# cross-point correlation and the finite-n bias the oracle leaves out.
SPDE_GRID = ReplacementSettings(M=10, L=5, K_v=300)


def spde_samples(params, n, R, seed, cache_dir, points=None):
    cache = build_cache(params, SPDE_GRID, cache_dir, workers=4)
    points = points or interior_grid(SPDE_GRID.M)
    for r in range(R):
        yield simulate_replacement(params, n, SPDE_GRID, cache, RngStream(seed, (r,)), points=points)


@pytest.mark.parametrize("alpha_prime", [0.4, 0.5])
def test_volatility_clt_on_the_spde(tmp_path, alpha_prime):
    params = ModelParams(2, 0.0, (0.0, 0.0), 1.0, 1.0, alpha_prime)
    n, R = 4000, 500
    known = KnownParameters.from_params(params)
    estimates = np.array([
        estimate_sigma_pooled(sample, known, delta=0.05).value("sigma_sq")
        for sample in spde_samples(params, n, R, 41, tmp_path)
    ])
    m = len(interior_grid(SPDE_GRID.M))
    assert m == 81
    # finite-n bias pulls the mean below 1
    assert 0.95 <= estimates.mean() <= 1.0
    assert np.var(math.sqrt(n * m) * estimates, ddof=1) == pytest.approx(upsilon(alpha_prime), rel=0.25)


def test_natural_parameters_on_the_spde(tmp_path, s3_points):
    params = ModelParams(2, 0.0, (6.0, 0.0), 1.0, 1.0, 0.4)
    known = KnownParameters(alpha_prime=0.4)
    fits = [log_linear_fit(sample, known, delta=0.05)
            for sample in spde_samples(params, 10_000, 100, 43, tmp_path, points=s3_points)]
    assert np.median([f.value("sigma0_sq") for f in fits]) == pytest.approx(1.0, abs=0.05)
    assert np.median([f.value("kappa_1") for f in fits]) == pytest.approx(6.0, abs=0.15)
    assert np.median([f.value("kappa_2") for f in fits]) == pytest.approx(0.0, abs=0.10)


@pytest.mark.parametrize("alpha_prime, tolerance", [(0.4, 0.04), (0.5, 0.04), (0.6, 0.06)])
def test_damping_recovery_on_the_spde(tmp_path, alpha_prime, tolerance):
    # smoother paths at 0.6 leave a larger downward bias at this n
    params = ModelParams(2, 0.0, (0.0, 0.0), 1.0, 1.0, alpha_prime)
    estimates = [estimate_alpha(sample, delta=0.05).value("alpha_prime")
                 for sample in spde_samples(params, 8000, 40, 47, tmp_path)]
    assert np.median(estimates) == pytest.approx(alpha_prime, abs=tolerance)
