# core/estimate.py
# Estimators built on realized volatilities of temporal increments: the
# volatility estimators (pointwise and pooled), the quarticity, the log-linear
# least-squares fit of the natural parameters and the two-grid estimator of
# the damping parameter, with asymptotic variances and normal intervals.

import logging
import math
from dataclasses import dataclass, replace
from typing import Dict, Iterable, Optional, Sequence, Tuple

import numpy as np

from core.errors import ConfigError, DataError, DomainError, InteriorMarginError
from core.model import (
    DEFAULT_SERIES_TOL,
    alpha_clt_variance,
    lambda_const,
    natural_rescaling_constant,
    psi_clt_covariance,
    upsilon,
)
from core.numerics import DesignMatrix, normal_quantile, ols_solve
from models.params import ModelParams
from models.report import ComponentEstimate, EstimationReport, SchemeDiagnostics
from models.sample import FieldSample, SamplingScheme, outside_margin

logger = logging.getLogger(__name__)

ESTIMATORS = ("sigma_point", "sigma", "quarticity", "log_linear", "alpha")
ALPHA_CLIP = 1e-3


@dataclass(frozen=True)
class KnownParameters:
    """
    Parameters an estimator may treat as known.

    Attributes:
        eta: diffusivity
        kappa: curvature kappa_l = nu_l / eta
        alpha_prime: damping parameter
        plug_in: alpha_prime is an estimate rather than the truth
    """
    eta: Optional[float] = None
    kappa: Optional[Tuple[float, ...]] = None
    alpha_prime: Optional[float] = None
    plug_in: bool = False

    @classmethod
    def from_params(cls, params: ModelParams) -> "KnownParameters":
        return cls(eta=params.eta, kappa=tuple(params.kappa), alpha_prime=params.alpha_prime)

    def require(self, estimator: str, *names: str) -> None:
        missing = [name for name in names if getattr(self, name) is None]
        if missing:
            raise ConfigError(f"{estimator} needs known {', '.join(missing)}")

    def to_dict(self) -> Dict[str, object]:
        return {
            "eta": self.eta,
            "kappa": None if self.kappa is None else list(self.kappa),
            "alpha_prime": self.alpha_prime,
            "plug_in": self.plug_in,
        }


# --- helpers ---

def _rescaling_constant(d: int, eta: float, alpha_prime: float) -> float:
    # K(d, eta, alpha') = K(d, 1, alpha') / eta^(d/2)
    return natural_rescaling_constant(d, alpha_prime) / eta ** (d / 2.0)


def _interior(sample: FieldSample, delta: Optional[float], indices: Iterable[int]) -> float:
    margin = delta if delta is not None else sample.scheme.delta
    if margin is None:
        raise DomainError("an interior margin delta is required for estimation")
    points = sample.scheme.points_array()[list(indices)]
    outside = outside_margin(points, margin)
    if outside.any():
        raise InteriorMarginError(
            f"point {points[np.flatnonzero(outside)[0]].tolist()} lies outside "
            f"[{margin}, {1 - margin}]^{sample.scheme.d}"
        )
    return margin


def _tilts(sample: FieldSample, kappa: Sequence[float]) -> np.ndarray:
    kappa = np.asarray(kappa, dtype=float)
    if kappa.shape != (sample.scheme.d,):
        raise ConfigError(f"kappa has {kappa.size} entries, sample has d = {sample.scheme.d}")
    return sample.scheme.points_array() @ kappa


def _interval(value: float, variance: float, level: float) -> Tuple[float, float]:
    half = normal_quantile(level) * math.sqrt(variance)
    return value - half, value + half


def _component(name: str, value: float, variance: Optional[float], level: float) -> ComponentEstimate:
    if variance is None or not np.isfinite(variance):
        return ComponentEstimate(name, float(value))
    return ComponentEstimate(name, float(value), float(variance), _interval(value, variance, level))


# --- realized volatilities ---

def realized_volatility(sample: FieldSample, y_index: int) -> float:
    """RV(y) = sum_{i=1}^n (X_{i Delta}(y) - X_{(i-1) Delta}(y))^2."""
    column = sample.values[:, y_index]
    return float(np.sum(np.diff(column) ** 2))


def realized_volatilities(sample: FieldSample) -> np.ndarray:
    return np.sum(sample.increments() ** 2, axis=0)


def rescaled_realized_volatility(sample: FieldSample, y_index: int, alpha_prime: float) -> float:
    """RV(y) / (n Delta^alpha'), whose mean tends to sigma^2 K exp(-sum_l kappa_l y_l)."""
    return realized_volatility(sample, y_index) / (sample.n * sample.Delta ** alpha_prime)


# --- volatility ---

def _sigma_terms(sample: FieldSample, known: KnownParameters) -> np.ndarray:
    # per-point estimates (n Delta^a' K)^-1 RV(y_j) exp(sum_l kappa_l y_{j,l})
    K = _rescaling_constant(sample.scheme.d, known.eta, known.alpha_prime)
    rv = realized_volatilities(sample)
    return rv * np.exp(_tilts(sample, known.kappa)) / (sample.n * sample.Delta ** known.alpha_prime * K)


def quarticity(sample: FieldSample, known: KnownParameters, delta: Optional[float] = None) -> float:
    """
    sigma^4 estimate K^-2 (3 m n Delta^(2 alpha'))^-1 sum_j sum_i (Delta_i X)^4(y_j) exp(2 sum_l kappa_l y_{j,l}).

    Raises:
        InteriorMarginError: if a point is outside [delta, 1 - delta]^d.
    """
    known.require("quarticity", "eta", "kappa", "alpha_prime")
    _interior(sample, delta, range(sample.m))
    K = _rescaling_constant(sample.scheme.d, known.eta, known.alpha_prime)
    fourth = np.sum(sample.increments() ** 4, axis=0)
    weighted = np.sum(fourth * np.exp(2.0 * _tilts(sample, known.kappa)))
    return float(weighted / (3.0 * sample.m * sample.n * sample.Delta ** (2.0 * known.alpha_prime) * K ** 2))


def _sigma_report(name: str, sample: FieldSample, known: KnownParameters, estimate: float,
                  m: int, fourth_moment: float, ci_level: float, tol: float,
                  variance_source: str) -> EstimationReport:
    ups = upsilon(known.alpha_prime, tol)
    variance = ups * fourth_moment / (sample.n * m)
    K = _rescaling_constant(sample.scheme.d, known.eta, known.alpha_prime)
    return EstimationReport(
        estimator=name,
        components=(_component("sigma_sq", estimate, variance, ci_level),),
        ci_level=ci_level,
        assumed=known.to_dict(),
        plug_in=known.plug_in,
        constants={"K": K, "upsilon": ups},
        diagnostics={"n": sample.n, "m": m, "variance_source": variance_source},
    )


def estimate_sigma_point(sample: FieldSample, y_index: int, known: KnownParameters,
                         delta: Optional[float] = None, ci_level: float = 0.95,
                         tol: float = DEFAULT_SERIES_TOL) -> EstimationReport:
    """
    Volatility from a single spatial point:
    (n Delta^alpha' K)^-1 sum_i (Delta_i X)^2(y) exp(sum_l kappa_l y_l).

    Args:
        sample: observed field
        y_index: column of the point
        known: eta, kappa and alpha' must be set
        delta: interior margin (default: the sample's)

    Raises:
        InteriorMarginError: if y is outside [delta, 1 - delta]^d.
    """
    known.require("sigma_point", "eta", "kappa", "alpha_prime")
    margin = _interior(sample, delta, [y_index])
    point = sample.select([y_index])
    estimate = float(_sigma_terms(point, known)[0])
    fourth = quarticity(point, known, margin)
    return _sigma_report("sigma_point", point, known, estimate, 1, fourth, ci_level, tol, "quarticity")


def estimate_sigma_pooled(sample: FieldSample, known: KnownParameters, delta: Optional[float] = None,
                          ci_level: float = 0.95, tol: float = DEFAULT_SERIES_TOL,
                          variance_source: str = "quarticity") -> EstimationReport:
    """
    Volatility pooled over all m points: the mean of the pointwise estimates.

    The asymptotic variance is Upsilon sigma^4 / (n m) with sigma^4 taken from the
    quarticity (variance_source="quarticity") or as the squared estimate ("plug_in").
    """
    known.require("sigma", "eta", "kappa", "alpha_prime")
    margin = _interior(sample, delta, range(sample.m))
    estimate = float(np.mean(_sigma_terms(sample, known)))
    if variance_source == "quarticity":
        fourth = quarticity(sample, known, margin)
    elif variance_source == "plug_in":
        fourth = estimate ** 2
    else:
        raise ConfigError(f"unknown variance source {variance_source!r}")
    return _sigma_report("sigma", sample, known, estimate, sample.m, fourth, ci_level, tol, variance_source)


# --- scheme checks ---

def _separation(points: np.ndarray) -> Optional[float]:
    # m * min over pairs of the smallest nonzero absolute coordinate difference (min of empty set = 0)
    m = points.shape[0]
    if m < 2:
        return None
    diffs = np.abs(points[:, None, :] - points[None, :, :])
    upper = np.triu_indices(m, k=1)
    pair_diffs = diffs[upper]
    nonzero = np.where(pair_diffs > 0, pair_diffs, np.inf)
    per_pair = np.min(nonzero, axis=1)
    per_pair = np.where(np.isfinite(per_pair), per_pair, 0.0)
    return float(m * np.min(per_pair))


def validate_scheme(sample: FieldSample, alpha_prime: float) -> SchemeDiagnostics:
    """
    Compare the observation scheme with the growth conditions of the limit theorems.

    Reports m against n^((1 - alpha')/(d + 2)), the spatial separation statistic,
    the design rank and the minimal n of the log-linear model. Never raises on a violation.
    """
    scheme = sample.scheme
    n, m, d = scheme.n, scheme.m, scheme.d
    points = scheme.points_array()
    bound = n ** ((1.0 - alpha_prime) / (d + 2.0))
    design = DesignMatrix.from_points(points)
    rank = design.rank()
    full_rank = design.is_full_rank()
    determinant = design.determinant() if design.rows == design.cols else None
    min_n = (d + 1.0) ** ((d + 2.0) / (1.0 - alpha_prime))
    separation = _separation(points)

    warnings = []
    if not m < bound:
        warnings.append(f"m = {m} is not below n^((1-alpha')/(d+2)) = {bound:.4g}")
    if separation is not None and separation == 0.0:
        warnings.append("spatial separation statistic is 0")
    if not full_rank:
        warnings.append(f"design rank {rank} < {d + 1}: log-linear fit not identifiable")
    if not n > min_n:
        warnings.append(f"n = {n} is not above (d+1)^((d+2)/(1-alpha')) = {min_n:.4g}")
    for w in warnings:
        logger.warning("scheme check: %s", w)
    return SchemeDiagnostics(
        n=n, m=m, d=d, alpha_prime=alpha_prime,
        spatial_bound=bound, within_spatial_bound=m < bound,
        separation=separation, full_rank=full_rank, rank=rank, determinant=determinant,
        log_linear_min_n=min_n, log_linear_n_ok=n > min_n, warnings=tuple(warnings),
    )


# --- log-linear model ---

def log_linear_fit(sample: FieldSample, known: KnownParameters, delta: Optional[float] = None,
                   ci_level: float = 0.95, tol: float = DEFAULT_SERIES_TOL) -> EstimationReport:
    """
    Least-squares fit of log(RV(y_j) / (n Delta^alpha')) = Psi_0 + sum_l Psi_l y_{j,l}.

    Psi_0 = log(sigma0^2 K|_(eta=1)) and Psi_l = -kappa_l, so the natural parameters are
    sigma0^2 = exp(Psi_0) / K|_(eta=1) and kappa_l = -Psi_l for any eta.

    Args:
        sample: m >= d + 1 interior points whose design has full rank
        known: alpha' must be set
        delta: interior margin (default: the sample's)

    Returns:
        Report with components psi_0..psi_d, sigma0_sq, kappa_1..kappa_d and the
        covariances "psi" and "upsilon".

    Raises:
        DataError: if a realized volatility is not positive.
        FullRankViolation: if the design is rank deficient.
    """
    known.require("log_linear", "alpha_prime")
    a = known.alpha_prime
    margin = _interior(sample, delta, range(sample.m))
    d = sample.scheme.d
    rv = realized_volatilities(sample)
    if np.any(rv <= 0.0):
        bad = int(np.flatnonzero(rv <= 0.0)[0])
        raise DataError(f"realized volatility {rv[bad]} at point {sample.scheme.spatial_points[bad]} is not positive")

    points = sample.scheme.points_array()
    design = DesignMatrix.from_points(points)
    Y = np.log(rv / (sample.n * sample.Delta ** a))
    psi = ols_solve(design, Y)
    K1 = natural_rescaling_constant(d, a)
    sigma0_sq = float(math.exp(psi[0]) / K1)
    kappa = -psi[1:]

    cov_psi = psi_clt_covariance(a, points, margin, sample.n, tol)
    J = -np.eye(d + 1)
    J[0, 0] = sigma0_sq
    cov_ups = J @ cov_psi @ J

    components = [_component(f"psi_{l}", psi[l], cov_psi[l, l], ci_level) for l in range(d + 1)]
    components.append(_component("sigma0_sq", sigma0_sq, cov_ups[0, 0], ci_level))
    components.extend(_component(f"kappa_{l}", kappa[l - 1], cov_ups[l, l], ci_level) for l in range(1, d + 1))

    scheme = validate_scheme(sample, a)
    residual = Y - design.matrix @ psi
    return EstimationReport(
        estimator="log_linear",
        components=tuple(components),
        ci_level=ci_level,
        assumed=known.to_dict(),
        plug_in=known.plug_in,
        constants={"K_eta1": K1, "upsilon": upsilon(a, tol)},
        covariances={"psi": cov_psi, "upsilon": cov_ups},
        diagnostics={"scheme": scheme.to_dict(), "residual_norm": float(np.linalg.norm(residual))},
    )


# --- damping parameter ---

def thin_time_grid(sample_2n: FieldSample) -> FieldSample:
    """
    Keep every second time point, so n halves and Delta doubles.

    Raises:
        DomainError: if the number of steps is odd.
    """
    if sample_2n.n % 2:
        raise DomainError(f"thinning needs an even number of steps, got {sample_2n.n}")
    scheme = SamplingScheme(sample_2n.n // 2, sample_2n.scheme.spatial_points, sample_2n.scheme.delta)
    return replace(sample_2n, values=sample_2n.values[::2], scheme=scheme)


def estimate_alpha(sample_2n: FieldSample, delta: Optional[float] = None, ci_level: float = 0.95,
                   tol: float = DEFAULT_SERIES_TOL) -> EstimationReport:
    """
    Two-grid damping estimator (m log 2)^-1 sum_j log(2 RV_n(y_j) / RV_2n(y_j)).

    The asymptotic variance (3 Upsilon - 2^(2 - a)(Upsilon + Lambda)) / (2 n m log(2)^2)
    is evaluated at the estimate clipped into [1e-3, 1 - 1e-3].

    Raises:
        DataError: if a realized volatility on either grid is not positive.
    """
    _interior(sample_2n, delta, range(sample_2n.m))
    coarse = thin_time_grid(sample_2n)
    rv_fine = realized_volatilities(sample_2n)
    rv_coarse = realized_volatilities(coarse)
    if np.any(rv_fine <= 0.0) or np.any(rv_coarse <= 0.0):
        raise DataError("realized volatilities must be positive on both time grids")

    estimate = float(np.mean(np.log(2.0 * rv_coarse / rv_fine)) / math.log(2.0))
    at = min(max(estimate, ALPHA_CLIP), 1.0 - ALPHA_CLIP)
    variance = alpha_clt_variance(at, coarse.n, sample_2n.m, tol)
    return EstimationReport(
        estimator="alpha",
        components=(_component("alpha_prime", estimate, variance, ci_level),),
        ci_level=ci_level,
        constants={"upsilon": upsilon(at, tol), "lambda": lambda_const(at, tol)},
        diagnostics={"n": coarse.n, "m": sample_2n.m, "variance_at": at, "clipped": at != estimate},
    )


# --- pipeline ---

def estimate_pipeline(sample: FieldSample, known: KnownParameters, estimators: Sequence[str],
                      delta: Optional[float] = None, ci_level: float = 0.95,
                      plug_in_alpha: bool = False, point_index: int = 0,
                      log_linear_indices: Optional[Sequence[int]] = None,
                      tol: float = DEFAULT_SERIES_TOL) -> Dict[str, EstimationReport]:
    """
    Run several estimators on one sample.

    With plug_in_alpha the damping estimate replaces the known alpha' of every later
    estimator; those reports carry plug_in = True and unadjusted standard errors.

    Args:
        sample: observed field (interior points only, or restrict with delta first)
        known: known parameters
        estimators: names from ESTIMATORS
        point_index: column used by sigma_point
        log_linear_indices: columns used by log_linear (default: all)
    """
    unknown = [e for e in estimators if e not in ESTIMATORS]
    if unknown:
        raise ConfigError(f"unknown estimators {unknown}; choose from {ESTIMATORS}")
    reports: Dict[str, EstimationReport] = {}
    if plug_in_alpha or "alpha" in estimators:
        reports["alpha"] = estimate_alpha(sample, delta, ci_level, tol)
    if plug_in_alpha:
        alpha_hat = reports["alpha"].value("alpha_prime")
        if not 0.0 < alpha_hat < 1.0:
            raise DataError(f"estimated alpha' = {alpha_hat} is outside (0, 1) and cannot be plugged in")
        logger.warning("using plug-in alpha' = %.4f; standard errors are not adjusted", alpha_hat)
        known = replace(known, alpha_prime=alpha_hat, plug_in=True)

    for name in estimators:
        if name == "sigma_point":
            reports[name] = estimate_sigma_point(sample, point_index, known, delta, ci_level, tol)
        elif name == "sigma":
            reports[name] = estimate_sigma_pooled(sample, known, delta, ci_level, tol)
        elif name == "quarticity":
            reports[name] = EstimationReport(
                estimator="quarticity",
                components=(ComponentEstimate("sigma4", quarticity(sample, known, delta)),),
                ci_level=ci_level,
                assumed=known.to_dict(),
                plug_in=known.plug_in,
            )
        elif name == "log_linear":
            subset = sample if log_linear_indices is None else sample.select(log_linear_indices)
            reports[name] = log_linear_fit(subset, known, delta, ci_level, tol)
    return reports
