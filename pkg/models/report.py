# models/report.py
# 결과 레코드: 추정 리포트, 관측 스킴 진단, Monte Carlo 요약.

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from core.errors import DomainError
from core.numerics import Summary


@dataclass(frozen=True)
class ComponentEstimate:
    """
    One scalar component of an estimator.

    Attributes:
        name: component name (sigma_sq, sigma0_sq, kappa_1, psi_0, alpha_prime, ...)
        value: point estimate
        variance: asymptotic variance of the estimate (None when not available)
        ci: (lower, upper) normal confidence interval, None without a variance
    """
    name: str
    value: float
    variance: Optional[float] = None
    ci: Optional[Tuple[float, float]] = None

    def __post_init__(self):
        if self.variance is not None and self.variance < 0:
            raise DomainError(f"{self.name}: negative asymptotic variance {self.variance}")
        if self.ci is not None and not self.ci[0] <= self.value <= self.ci[1]:
            raise DomainError(f"{self.name}: confidence interval {self.ci} does not contain {self.value}")

    @property
    def se(self) -> Optional[float]:
        return None if self.variance is None else float(np.sqrt(self.variance))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "value": self.value,
            "variance": self.variance,
            "se": self.se,
            "ci_lo": None if self.ci is None else self.ci[0],
            "ci_hi": None if self.ci is None else self.ci[1],
        }


@dataclass(frozen=True)
class SchemeDiagnostics:
    """
    Checks of an observation scheme against the growth conditions of the limit theorems.

    Attributes:
        n, m, d: temporal steps, spatial points, dimension
        alpha_prime: damping used for the bounds
        spatial_bound: n^((1 - alpha') / (d + 2)); m should stay below it
        within_spatial_bound: m < spatial_bound
        separation: m * min over pairs of the smallest nonzero coordinate distance (None for m = 1)
        full_rank: whether (1, y_j) spans R^(d+1)
        rank: rank of the design
        determinant: determinant of a square design (m = d + 1), else None
        log_linear_min_n: (d + 1)^((d + 2) / (1 - alpha')); the log-linear fit needs n above it
        warnings: human readable violations
    """
    n: int
    m: int
    d: int
    alpha_prime: float
    spatial_bound: float
    within_spatial_bound: bool
    separation: Optional[float]
    full_rank: bool
    rank: int
    determinant: Optional[float]
    log_linear_min_n: float
    log_linear_n_ok: bool
    warnings: Tuple[str, ...] = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n": self.n,
            "m": self.m,
            "d": self.d,
            "alpha_prime": self.alpha_prime,
            "spatial_bound": self.spatial_bound,
            "within_spatial_bound": self.within_spatial_bound,
            "separation": self.separation,
            "full_rank": self.full_rank,
            "rank": self.rank,
            "determinant": self.determinant,
            "log_linear_min_n": self.log_linear_min_n,
            "log_linear_n_ok": self.log_linear_n_ok,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class EstimationReport:
    """
    Output of one estimator.

    Attributes:
        estimator: sigma_point, sigma, quarticity, log_linear or alpha
        components: point estimates with variances and confidence intervals
        ci_level: confidence level of the intervals
        assumed: known parameters the estimator relied on
        plug_in: True when alpha' was replaced by its estimate
        constants: constants used (K, Upsilon, Lambda)
        covariances: asymptotic covariance matrices of vector-valued estimators
        diagnostics: scheme checks and estimator-specific notes
    """
    estimator: str
    components: Tuple[ComponentEstimate, ...]
    ci_level: float = 0.95
    assumed: Dict[str, Any] = field(default_factory=dict)
    plug_in: bool = False
    constants: Dict[str, float] = field(default_factory=dict)
    covariances: Dict[str, np.ndarray] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)

    def component(self, name: str) -> ComponentEstimate:
        for c in self.components:
            if c.name == name:
                return c
        raise KeyError(f"{self.estimator} has no component {name!r}")

    def value(self, name: str) -> float:
        return self.component(name).value

    def values(self) -> Dict[str, float]:
        return {c.name: c.value for c in self.components}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimator": self.estimator,
            "ci_level": self.ci_level,
            "components": {c.name: c.to_dict() for c in self.components},
            "assumed": dict(self.assumed),
            "plug_in": self.plug_in,
            "constants": dict(self.constants),
            "covariances": {k: np.asarray(v).tolist() for k, v in self.covariances.items()},
            "diagnostics": dict(self.diagnostics),
        }


@dataclass(frozen=True)
class StudyEntry:
    """
    Monte Carlo summary of one estimator component.

    Attributes:
        estimator, component: what was estimated
        truth: true value (None when the component has no simulated counterpart)
        summary: mean, variance and quantiles of the estimates over replications
        theoretical_variance: asymptotic variance from the limit theorem at the true parameters
        normalized_errors: summary of (estimate - truth) / sqrt(theoretical_variance)
        covered: number of replications whose interval contained the truth
        with_interval: number of replications that produced an interval
    """
    estimator: str
    component: str
    truth: Optional[float]
    summary: Summary
    theoretical_variance: Optional[float] = None
    normalized_errors: Optional[Summary] = None
    covered: int = 0
    with_interval: int = 0

    @property
    def coverage(self) -> Optional[float]:
        return self.covered / self.with_interval if self.with_interval else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "estimator": self.estimator,
            "component": self.component,
            "truth": self.truth,
            "summary": self.summary.to_dict(),
            "theoretical_variance": self.theoretical_variance,
            "normalized_errors": None if self.normalized_errors is None else self.normalized_errors.to_dict(),
            "covered": self.covered,
            "with_interval": self.with_interval,
            "coverage": self.coverage,
        }


@dataclass(frozen=True)
class StudySummary:
    """
    Result of a Monte Carlo run.

    Attributes:
        replications: requested replication count R
        succeeded: replications that produced estimates
        failures: (replication, message) of the failed ones
        entries: one entry per estimator component
        config: the fully resolved run configuration
        csv: file name of the per-replication table, next to the summary
    """
    replications: int
    succeeded: int
    failures: Tuple[Tuple[int, str], ...]
    entries: Tuple[StudyEntry, ...]
    config: Dict[str, Any] = field(default_factory=dict)
    csv: Optional[str] = None

    def __post_init__(self):
        if self.succeeded + len(self.failures) != self.replications:
            raise DomainError(
                f"{self.succeeded} succeeded + {len(self.failures)} failed != {self.replications} replications"
            )

    @property
    def complete(self) -> bool:
        return not self.failures

    def entry(self, estimator: str, component: str) -> StudyEntry:
        for e in self.entries:
            if e.estimator == estimator and e.component == component:
                return e
        raise KeyError(f"no summary for {estimator}/{component}")

    def to_dict(self) -> Dict[str, Any]:
        return {
            "replications": self.replications,
            "succeeded": self.succeeded,
            "failure_count": len(self.failures),
            "failures": [{"replication": r, "error": msg} for r, msg in self.failures],
            "complete": self.complete,
            "entries": [e.to_dict() for e in self.entries],
            "config": self.config,
            "csv": self.csv,
        }


def report_rows(report: EstimationReport) -> List[Dict[str, Any]]:
    """Flat rows (estimator, component, value, se, ci_lo, ci_hi) of a report."""
    rows = []
    for c in report.components:
        d = c.to_dict()
        rows.append({
            "estimator": report.estimator,
            "component": c.name,
            "value": d["value"],
            "se": d["se"],
            "ci_lo": d["ci_lo"],
            "ci_hi": d["ci_hi"],
        })
    return rows
