# tests/conftest.py
# Shared fixtures. The synthetic field factory draws, independently per point,
# sigma * sqrt(K exp(-sum_l kappa_l y_l)) * B(t) with B a fractional Brownian
# motion of Hurst index alpha'/2 (exact, by circulant embedding). Its increments
# have exactly the limiting variance and autocorrelation of the SPDE increments.

import os
import sys

import numpy as np
import pytest

project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from core.config import clear_settings_cache
from core.model import rescaling_constant_K
from core.simulate import clear_cache_registry
from models.config import NAMED_POINT_SETS
from models.params import ModelParams
from models.sample import FieldSample, SamplingScheme


def fgn_autocovariance(alpha_prime: float, lags: np.ndarray) -> np.ndarray:
    k = np.abs(np.asarray(lags, dtype=float))
    a = alpha_prime
    return 0.5 * (np.abs(k + 1) ** a + np.abs(k - 1) ** a - 2.0 * k ** a)


def fgn_paths(alpha_prime: float, n: int, columns: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-variance fractional Gaussian noise, shape (n, columns)."""
    gamma = fgn_autocovariance(alpha_prime, np.arange(n + 1))
    row = np.concatenate([gamma, gamma[-2:0:-1]])
    size = row.size
    eig = np.clip(np.fft.fft(row).real, 0.0, None)
    z = rng.standard_normal((size, columns)) + 1j * rng.standard_normal((size, columns))
    return np.fft.fft(np.sqrt(eig / size)[:, None] * z, axis=0).real[:n]


def synthetic_field(params: ModelParams, n: int, points, seed: int = 0, delta: float = None,
                    rng: np.random.Generator = None) -> FieldSample:
    """FieldSample whose columns are scaled fBm paths on t_i = i / n."""
    scheme = SamplingScheme(n, tuple(tuple(p) for p in points), delta)
    rng = rng if rng is not None else np.random.default_rng(seed)
    tilts = scheme.points_array() @ np.asarray(params.kappa)
    scale = np.sqrt(params.sigma ** 2 * rescaling_constant_K(params) * np.exp(-tilts) * scheme.Delta ** params.alpha_prime)
    increments = fgn_paths(params.alpha_prime, n, scheme.m, rng) * scale
    values = np.vstack([np.zeros((1, scheme.m)), np.cumsum(increments, axis=0)])
    return FieldSample(values, scheme, params, seed, "observed")


def interior_grid(M: int, d: int = 2):
    axis = [j / M for j in range(1, M)]
    grid = np.stack(np.meshgrid(*[axis] * d, indexing="ij"), axis=-1).reshape(-1, d)
    return [tuple(p) for p in grid]


@pytest.fixture
def params():
    return ModelParams(d=2, theta0=0.0, nu=(0.0, 0.0), eta=1.0, sigma=1.0, alpha_prime=0.5)


@pytest.fixture
def tilted_params():
    return ModelParams(d=2, theta0=0.0, nu=(5.0, 0.0), eta=1.0, sigma=1.0, alpha_prime=0.4)


@pytest.fixture
def s3_points():
    return NAMED_POINT_SETS["S3"]


@pytest.fixture
def make_field():
    return synthetic_field


@pytest.fixture(autouse=True)
def isolated_environment(monkeypatch, tmp_path):
    # every test starts with fresh settings, an empty cache registry and its own cache dir
    for name in ("SPDE_CACHE_DIR", "SPDE_WORKERS", "SPDE_SERIES_TOL", "SPDE_BUDGET", "SPDE_LOG_LEVEL"):
        monkeypatch.delenv(name, raising=False)
    monkeypatch.setenv("SPDE_CACHE_DIR", str(tmp_path / "cache"))
    monkeypatch.chdir(tmp_path)
    clear_settings_cache()
    clear_cache_registry()
    yield
    clear_settings_cache()
    clear_cache_registry()
