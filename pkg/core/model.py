# core/model.py
# Spectral objects of the SPDE (eigenvalues, eigenfunctions) and every
# closed-form quantity the estimators and simulators are checked against:
# the rescaling constant K, the series constants Upsilon and Lambda, the
# increment moments and the asymptotic covariances of the estimators.

import logging
import math
from typing import Iterable, Sequence, Union

import numpy as np

from core.errors import DomainError
from core.numerics import (
    DesignMatrix,
    gamma,
    power_second_difference,
    series_truncation_length,
    sum_series,
)
from models.params import ModelParams, MultiIndex

logger = logging.getLogger(__name__)

DEFAULT_SERIES_TOL = 1e-10

IndexLike = Union[MultiIndex, Sequence[int]]


def _index(k: IndexLike, d: int) -> np.ndarray:
    values = k.k if isinstance(k, MultiIndex) else MultiIndex.of(k).k
    if len(values) != d:
        raise DomainError(f"multi-index {values} has length {len(values)}, expected d = {d}")
    return np.asarray(values, dtype=float)


def _unit_point(y: Iterable[float], d: int) -> np.ndarray:
    point = np.asarray(y, dtype=float)
    if point.shape != (d,):
        raise DomainError(f"spatial point has shape {point.shape}, expected ({d},)")
    if np.any(point < 0.0) or np.any(point > 1.0):
        raise DomainError(f"spatial point {point.tolist()} lies outside [0, 1]^{d}")
    return point


def spatial_tilt(params: ModelParams, y: Iterable[float]) -> float:
    """Signed sum sum_l kappa_l y_l (written ||kappa . y||_1 in the moment formulas)."""
    point = _unit_point(y, params.d)
    return float(np.dot(params.kappa, point))


# --- spectral objects ---

def eigenvalue(params: ModelParams, k: IndexLike) -> float:
    """
    lambda_k = -theta0 + sum_l (nu_l^2 / (4 eta) + pi^2 k_l^2 eta).

    Args:
        params: model parameters
        k: mode multi-index, every component >= 1

    Returns:
        The (positive) eigenvalue of -A for the mode k.
    """
    kk = _index(k, params.d)
    return float(params.eigenvalue_offset + math.pi ** 2 * params.eta * np.sum(kk * kk))


def eigenvalues(params: ModelParams, modes: np.ndarray) -> np.ndarray:
    """Vectorised eigenvalue for an (N, d) integer array of modes."""
    modes = np.asarray(modes, dtype=float)
    return params.eigenvalue_offset + math.pi ** 2 * params.eta * np.sum(modes * modes, axis=-1)


def _sines(k: np.ndarray, y: np.ndarray) -> np.ndarray:
    # sin(pi k y) with exact zeros on the boundary y in {0, 1}
    on_boundary = (y == 0.0) | (y == 1.0)
    return np.where(on_boundary, 0.0, np.sin(math.pi * k * y))


def eigenfunction(params: ModelParams, k: IndexLike, y: Iterable[float]) -> float:
    """
    e_k(y) = 2^(d/2) prod_l sin(pi k_l y_l) exp(-kappa_l y_l / 2).

    Raises:
        DomainError: if y is not in [0, 1]^d.
    """
    kk = _index(k, params.d)
    point = _unit_point(y, params.d)
    kappa = np.asarray(params.kappa)
    factors = _sines(kk, point) * np.exp(-kappa * point / 2.0)
    return float(2.0 ** (params.d / 2.0) * np.prod(factors))


def eigenfunction_matrix(params: ModelParams, modes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """
    Values e_k(y_j) as an array of shape (len(points), len(modes)).

    Args:
        params: model parameters
        modes: (N, d) integer array
        points: (m, d) array of points in [0, 1]^d
    """
    modes = np.atleast_2d(np.asarray(modes, dtype=float))
    points = np.atleast_2d(np.asarray(points, dtype=float))
    for point in points:
        _unit_point(point, params.d)
    kappa = np.asarray(params.kappa)
    out = np.full((points.shape[0], modes.shape[0]), 2.0 ** (params.d / 2.0))
    for axis in range(params.d):
        y = points[:, axis][:, None]
        out *= _sines(modes[:, axis][None, :], y) * np.exp(-kappa[axis] * y / 2.0)
    return out


def stationary_mode_variance(params: ModelParams, lam) -> np.ndarray:
    """Stationary variance sigma^2 / (2 lambda^(1+alpha)) of a coordinate process."""
    lam = np.asarray(lam, dtype=float)
    return params.sigma ** 2 / (2.0 * lam ** (1.0 + params.alpha))


def coordinate_covariance(params: ModelParams, k: IndexLike, i: int, j: int, Delta: float) -> float:
    """
    Cov(x_k(t_i), x_k(t_j)) for zero initial condition:
    sigma^2 / (2 lambda^(1+alpha)) exp(-lambda |i-j| Delta) (1 - exp(-2 lambda min(i,j) Delta)).
    """
    if i < 0 or j < 0:
        raise DomainError(f"time indices must be non-negative, got ({i}, {j})")
    lam = eigenvalue(params, k)
    v = float(stationary_mode_variance(params, lam))
    return v * math.exp(-lam * abs(i - j) * Delta) * -math.expm1(-2.0 * lam * min(i, j) * Delta)


# --- constants ---

def rescaling_constant_K(params: ModelParams) -> float:
    """
    K = Gamma(1 - alpha') / (2^d (pi eta)^(d/2) alpha' Gamma(d/2)).

    Diverges as alpha' -> 1; ModelParams keeps alpha' < 1 so the value is finite.
    """
    a = params.alpha_prime
    d = params.d
    return gamma(1.0 - a) / (2.0 ** d * (math.pi * params.eta) ** (d / 2.0) * a * gamma(d / 2.0))


def natural_rescaling_constant(d: int, alpha_prime: float) -> float:
    """K evaluated at eta = 1, so that sigma^2 K = sigma0^2 K|_(eta=1)."""
    a = alpha_prime
    return gamma(1.0 - a) / (2.0 ** d * math.pi ** (d / 2.0) * a * gamma(d / 2.0))


def _check_series_alpha(alpha_prime: float) -> None:
    if not 0.0 < alpha_prime <= 1.0:
        raise DomainError(f"alpha_prime must lie in (0, 1], got {alpha_prime}")


def upsilon(alpha_prime: float, tol: float = DEFAULT_SERIES_TOL) -> float:
    """
    Upsilon = sum_{r>=0} (-r^a + 2(r+1)^a - (r+2)^a)^2 + 2 with a = alpha'.

    The series is cut once its analytic tail bound drops below tol.
    """
    _check_series_alpha(alpha_prime)
    length = series_truncation_length(alpha_prime, tol)
    total = sum_series(lambda r: power_second_difference(r, alpha_prime) ** 2, length)
    logger.debug("upsilon(%s): %d terms", alpha_prime, length)
    return total + 2.0


def lambda_const(alpha_prime: float, tol: float = DEFAULT_SERIES_TOL) -> float:
    """
    Lambda = 2(2^a - 2) + sum_{r>=0} D(r+1) D(r), D(r) = -r^a + 2(r+1)^a - (r+2)^a.
    """
    _check_series_alpha(alpha_prime)
    length = series_truncation_length(alpha_prime, tol)
    total = sum_series(
        lambda r: power_second_difference(r + 1.0, alpha_prime) * power_second_difference(r, alpha_prime),
        length,
    )
    logger.debug("lambda_const(%s): %d terms", alpha_prime, length)
    return 2.0 * (2.0 ** alpha_prime - 2.0) + total


# --- increment moments ---

def theoretical_mean_sq_increment(params: ModelParams, y: Iterable[float], Delta: float) -> float:
    """Limit Delta^alpha' sigma^2 exp(-sum_l kappa_l y_l) K of E[(X_{t+Delta}(y) - X_t(y))^2]."""
    if Delta <= 0:
        raise DomainError(f"Delta must be positive, got {Delta}")
    tilt = spatial_tilt(params, y)
    return Delta ** params.alpha_prime * params.sigma ** 2 * math.exp(-tilt) * rescaling_constant_K(params)


def theoretical_autocorrelation(alpha_prime: float, lag: int) -> float:
    """rho(h) = -h^a + ((h-1)^a + (h+1)^a) / 2."""
    if lag < 1:
        raise DomainError(f"lag must be >= 1, got {lag}")
    a = alpha_prime
    h = float(lag)
    return -(h ** a) + ((h - 1.0) ** a + (h + 1.0) ** a) / 2.0


def theoretical_autocovariance(params: ModelParams, y: Iterable[float], Delta: float, lag: int) -> float:
    """
    Limit covariance of increments h = lag steps apart:
    -sigma^2 exp(-tilt) Delta^alpha' K / 2 (2h^a - (h-1)^a - (h+1)^a).
    """
    if lag < 1:
        raise DomainError(f"lag must be >= 1, got {lag}")
    a = params.alpha_prime
    h = float(lag)
    scale = theoretical_mean_sq_increment(params, y, Delta) / 2.0
    return -scale * (2.0 * h ** a - (h - 1.0) ** a - (h + 1.0) ** a)


def _mode_sum(params: ModelParams, y: Iterable[float], cutoff: int, weight) -> float:
    # sum over k in {1..cutoff}^d of e_k(y)^2 weight(lambda_k), one first-axis slice at a time
    if cutoff < 1:
        raise DomainError(f"cutoff must be >= 1, got {cutoff}")
    point = _unit_point(y, params.d)
    kappa = np.asarray(params.kappa)
    ks = np.arange(1, cutoff + 1, dtype=float)
    # per-axis factor 2 sin^2(pi k y_l) exp(-kappa_l y_l) and pi^2 eta k^2
    axis_sq = [2.0 * _sines(ks, point[l]) ** 2 * math.exp(-kappa[l] * point[l]) for l in range(params.d)]
    lam_part = math.pi ** 2 * params.eta * ks * ks
    rest_sq = np.ones(1)
    rest_lam = np.zeros(1)
    for l in range(1, params.d):
        rest_sq = np.multiply.outer(rest_sq, axis_sq[l]).ravel()
        rest_lam = np.add.outer(rest_lam, lam_part).ravel()
    total = 0.0
    for idx in range(cutoff):
        lam = params.eigenvalue_offset + lam_part[idx] + rest_lam
        total += float(axis_sq[0][idx] * np.sum(rest_sq * weight(lam)))
    return total


def truncated_mean_sq_increment(params: ModelParams, y: Iterable[float], Delta: float, cutoff: int) -> float:
    """
    Stationary E[(Delta X(y))^2] when only the modes {1..cutoff}^d are kept:
    sum_k e_k(y)^2 2 v_k (1 - exp(-lambda_k Delta)).
    """
    if Delta <= 0:
        raise DomainError(f"Delta must be positive, got {Delta}")
    return _mode_sum(
        params, y, cutoff,
        lambda lam: 2.0 * stationary_mode_variance(params, lam) * -np.expm1(-lam * Delta),
    )


def truncated_increment_autocovariance(params: ModelParams, y: Iterable[float], Delta: float,
                                       cutoff: int, lag: int) -> float:
    """
    Stationary covariance of increments lag steps apart for the truncated field:
    -sum_k e_k(y)^2 v_k (1 - exp(-lambda_k Delta))^2 exp(-lambda_k Delta (lag - 1)).
    """
    if lag < 1:
        raise DomainError(f"lag must be >= 1, got {lag}")
    if Delta <= 0:
        raise DomainError(f"Delta must be positive, got {Delta}")
    return -_mode_sum(
        params, y, cutoff,
        lambda lam: stationary_mode_variance(params, lam) * np.expm1(-lam * Delta) ** 2
        * np.exp(-lam * Delta * (lag - 1)),
    )


def truncated_stationary_variance(params: ModelParams, y: Iterable[float], cutoff: int) -> float:
    """Var X_t(y) under stationary initialisation: sum_k e_k(y)^2 v_k."""
    return _mode_sum(params, y, cutoff, lambda lam: stationary_mode_variance(params, lam))


# --- asymptotic covariances ---

def asymptotic_sigma_matrix(spatial_points: Sequence[Sequence[float]], delta: float) -> np.ndarray:
    """
    Finite-m Sigma = (1 - 2 delta) / m X^T X for the design with rows (1, y_j).

    Args:
        spatial_points: m points in [delta, 1 - delta]^d
        delta: interior margin in (0, 1/2)
    """
    if not 0.0 < delta < 0.5:
        raise DomainError(f"delta must lie in (0, 1/2), got {delta}")
    X = DesignMatrix.from_points(spatial_points).matrix
    return (1.0 - 2.0 * delta) / X.shape[0] * (X.T @ X)


def sigma_clt_variance(alpha_prime: float, sigma_sq: float, n: int, m: int,
                       tol: float = DEFAULT_SERIES_TOL) -> float:
    """Asymptotic variance Upsilon sigma^4 / (n m) of the pooled volatility estimator."""
    return upsilon(alpha_prime, tol) * sigma_sq ** 2 / (n * m)


def psi_clt_covariance(alpha_prime: float, spatial_points: Sequence[Sequence[float]], delta: float,
                       n: int, tol: float = DEFAULT_SERIES_TOL) -> np.ndarray:
    """Covariance Upsilon (1 - 2 delta) Sigma^-1 / (n m) of the log-linear coefficients."""
    sigma = asymptotic_sigma_matrix(spatial_points, delta)
    m = len(spatial_points)
    return upsilon(alpha_prime, tol) * (1.0 - 2.0 * delta) * np.linalg.inv(sigma) / (n * m)


def upsilon_clt_covariance(alpha_prime: float, sigma0_sq: float, spatial_points: Sequence[Sequence[float]],
                           delta: float, n: int, tol: float = DEFAULT_SERIES_TOL) -> np.ndarray:
    """Delta-method covariance J Cov(Psi) J of the natural parameters, J = diag(sigma0^2, -1, ..., -1)."""
    cov = psi_clt_covariance(alpha_prime, spatial_points, delta, n, tol)
    J = -np.eye(cov.shape[0])
    J[0, 0] = sigma0_sq
    return J @ cov @ J


def alpha_clt_variance(alpha_prime: float, n: int, m: int, tol: float = DEFAULT_SERIES_TOL) -> float:
    """
    Asymptotic variance of the two-grid damping estimator with n coarse steps:
    (3 Upsilon - 2^(2 - a) (Upsilon + Lambda)) / (2 n m log(2)^2).
    """
    ups = upsilon(alpha_prime, tol)
    lam = lambda_const(alpha_prime, tol)
    return (3.0 * ups - 2.0 ** (2.0 - alpha_prime) * (ups + lam)) / (2.0 * n * m * math.log(2.0) ** 2)
