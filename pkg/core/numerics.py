# core/numerics.py
# Shared numerical kernels: special functions, series summation, dense least
# squares, reproducible Gaussian streams and summary statistics. Nothing in
# this module knows about SPDEs.

import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import special, stats
from scipy.linalg import solve_triangular

from core.errors import DomainError, FullRankViolation

logger = logging.getLogger(__name__)

RANK_TOLERANCE = 1e-10
SERIES_CHUNK = 1_000_000
MIN_SERIES_TERMS = 300


# --- special functions ---

def gamma(x: float) -> float:
    """Gamma function for positive real arguments."""
    if x <= 0:
        raise DomainError(f"gamma is only evaluated for positive arguments, got {x}")
    return float(special.gamma(x))


def normal_ppf(p: float) -> float:
    """Inverse CDF of the standard normal distribution."""
    if not 0.0 < p < 1.0:
        raise DomainError(f"probability must lie in (0, 1), got {p}")
    return float(stats.norm.ppf(p))


def normal_quantile(level: float) -> float:
    """Two-sided critical value z with P(|Z| <= z) = level."""
    if not 0.0 < level < 1.0:
        raise DomainError(f"confidence level must lie in (0, 1), got {level}")
    return normal_ppf(0.5 + level / 2.0)


# --- series ---

def power_second_difference(r: np.ndarray, a: float) -> np.ndarray:
    """
    Second difference -r^a + 2(r+1)^a - (r+2)^a for integer r >= 0.

    For r >= 1 the value is computed as r^a * (2((1+1/r)^a - 1) - ((1+2/r)^a - 1))
    with expm1/log1p, which keeps the tiny differences accurate for large r.
    """
    r = np.asarray(r, dtype=float)
    out = np.empty_like(r)
    zero = r == 0
    out[zero] = 2.0 - 2.0 ** a
    rr = r[~zero]
    if rr.size:
        out[~zero] = rr ** a * (
            2.0 * np.expm1(a * np.log1p(1.0 / rr)) - np.expm1(a * np.log1p(2.0 / rr))
        )
    return out


def series_truncation_length(a: float, tol: float) -> int:
    """
    Number of terms R after which series with terms bounded by C r^(2a-4),
    C = (a(1-a))^2, have an integral tail bound C R^(2a-3) / (3-2a) below tol.

    At least MIN_SERIES_TERMS terms are used so that the last term is also
    below tol * 1e-2.
    """
    if tol <= 0:
        raise DomainError(f"series tolerance must be positive, got {tol}")
    c = (a * (1.0 - a)) ** 2
    if c == 0.0:
        return MIN_SERIES_TERMS
    exponent = 3.0 - 2.0 * a
    length = (c / (exponent * tol)) ** (1.0 / exponent)
    return max(MIN_SERIES_TERMS, int(np.ceil(length)) + 1)


def sum_series(term: Callable[[np.ndarray], np.ndarray], length: int,
               chunk: int = SERIES_CHUNK) -> float:
    """Sum term(r) for r = 0..length-1, evaluating the vectorised term in chunks."""
    total = 0.0
    for start in range(0, length, chunk):
        r = np.arange(start, min(start + chunk, length), dtype=float)
        total += float(np.sum(term(r)))
    return total


# --- least squares ---

@dataclass(frozen=True)
class DesignMatrix:
    """
    Regression design with rows (1, y_1, ..., y_d), one row per spatial point.

    Attributes:
        matrix: array of shape (m, d + 1) whose first column is all ones.
    """
    matrix: np.ndarray

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "DesignMatrix":
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        return cls(np.hstack([np.ones((pts.shape[0], 1)), pts]))

    @property
    def rows(self) -> int:
        return self.matrix.shape[0]

    @property
    def cols(self) -> int:
        return self.matrix.shape[1]

    def rank(self, rel_tol: float = RANK_TOLERANCE) -> int:
        s = np.linalg.svd(self.matrix, compute_uv=False)
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > rel_tol * s[0]))

    def is_full_rank(self, rel_tol: float = RANK_TOLERANCE) -> bool:
        return self.rows >= self.cols and self.rank(rel_tol) == self.cols

    def determinant(self) -> float:
        if self.rows != self.cols:
            raise DomainError(f"determinant needs a square design, got {self.rows}x{self.cols}")
        return float(np.linalg.det(self.matrix))


def ols_solve(X: DesignMatrix, Y: Sequence[float]) -> np.ndarray:
    """
    Least-squares coefficients of Y on the design X via a QR factorisation.

    Args:
        X: design with m >= d + 1 rows and full column rank
        Y: response vector of length m

    Returns:
        Coefficient vector of length d + 1.

    Raises:
        FullRankViolation: if X is rank deficient (relative singular-value tolerance 1e-10).
    """
    y = np.asarray(Y, dtype=float)
    if y.shape != (X.rows,):
        raise DomainError(f"response has shape {y.shape}, expected ({X.rows},)")
    if not X.is_full_rank():
        raise FullRankViolation(X.rank(), X.cols)
    q, r = np.linalg.qr(X.matrix)
    return solve_triangular(r, q.T @ y)


# --- random streams ---

@dataclass
class RngStream:
    """
    Reproducible Gaussian stream identified by (seed, index).

    The index is a path of non-negative integers; `substream(i)` extends it, so
    replication r and mode k of that replication draw from (seed, (r, k)).
    A stream is consumed by a single caller.
    """
    seed: int
    index: Tuple[int, ...] = ()
    algorithm: str = "PCG64"
    _generator: Optional[np.random.Generator] = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.seed < 0 or self.seed >= 2 ** 64:
            raise DomainError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        if any(i < 0 for i in self.index):
            raise DomainError(f"stream index entries must be non-negative, got {self.index}")
        if self.algorithm != "PCG64":
            raise DomainError(f"unsupported generator algorithm {self.algorithm!r}")
        self.index = tuple(int(i) for i in self.index)

    @property
    def generator(self) -> np.random.Generator:
        if self._generator is None:
            seq = np.random.SeedSequence(entropy=self.seed, spawn_key=self.index)
            self._generator = np.random.Generator(np.random.PCG64(seq))
        return self._generator

    def substream(self, i: int) -> "RngStream":
        return RngStream(self.seed, self.index + (int(i),), self.algorithm)

    def normals(self, size) -> np.ndarray:
        return self.generator.standard_normal(size)


def gauss(stream: RngStream) -> float:
    """Next standard normal variate of the stream."""
    return float(stream.generator.standard_normal())


# --- summaries ---

DEFAULT_QUANTILES = (0.05, 0.25, 0.5, 0.75, 0.95)


@dataclass(frozen=True)
class Summary:
    """Sample mean, unbiased variance (None for a single sample) and quantiles."""
    count: int
    mean: float
    variance: Optional[float]
    quantiles: Dict[float, float]
    values: Tuple[float, ...] = field(repr=False, default=())

    def quantile(self, q: float) -> float:
        if not 0.0 <= q <= 1.0:
            raise DomainError(f"quantile level must lie in [0, 1], got {q}")
        return float(np.quantile(np.asarray(self.values), q))

    def to_dict(self) -> dict:
        return {
            "count": self.count,
            "mean": self.mean,
            "variance": self.variance,
            "quantiles": {str(q): v for q, v in self.quantiles.items()},
        }


def summary(samples: Sequence[float], quantiles: Sequence[float] = DEFAULT_QUANTILES) -> Summary:
    values = np.asarray(samples, dtype=float).ravel()
    if values.size == 0:
        raise DomainError("summary of an empty sample is undefined")
    variance = float(np.var(values, ddof=1)) if values.size > 1 else None
    return Summary(
        count=int(values.size),
        mean=float(np.mean(values)),
        variance=variance,
        quantiles={float(q): float(np.quantile(values, q)) for q in quantiles},
        values=tuple(float(v) for v in values),
    )
