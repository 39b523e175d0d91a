# models/sample.py
# Observation scheme, simulated field samples and the settings of the two simulators.

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Sequence, Tuple

import numpy as np

from core.errors import DomainError, InteriorMarginError
from models.params import ModelParams

INTERIOR_TOLERANCE = 1e-12

METHODS = ("truncation", "replacement", "observed")
INITIAL_CONDITIONS = ("zero", "stationary")


@dataclass(frozen=True)
class SamplingScheme:
    """
    Temporal resolution and spatial points of an observation.

    Attributes:
        n: number of time steps on [0, 1]; Delta = 1 / n
        spatial_points: m pairwise distinct points in [0, 1]^d
        delta: interior margin; when set, every coordinate must lie in [delta, 1 - delta].
               Raw simulator output on a full grid carries delta = None.
    """
    n: int
    spatial_points: Tuple[Tuple[float, ...], ...]
    delta: Optional[float] = None

    def __post_init__(self):
        points = tuple(tuple(float(c) for c in p) for p in self.spatial_points)
        object.__setattr__(self, "spatial_points", points)
        if self.n < 1:
            raise DomainError(f"n must be >= 1, got {self.n}")
        if not points:
            raise DomainError("a sampling scheme needs at least one spatial point")
        dims = {len(p) for p in points}
        if len(dims) != 1:
            raise DomainError(f"spatial points have mixed dimensions {sorted(dims)}")
        if len(set(points)) != len(points):
            raise DomainError("spatial points must be pairwise distinct")
        arr = np.asarray(points)
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise DomainError("spatial points must lie in [0, 1]^d")
        if self.delta is not None:
            if not 0.0 < self.delta < 0.5:
                raise DomainError(f"delta must lie in (0, 1/2), got {self.delta}")
            outside = outside_margin(arr, self.delta)
            if outside.any():
                bad = [points[j] for j in np.flatnonzero(outside)]
                raise InteriorMarginError(
                    f"{len(bad)} point(s) outside [{self.delta}, {1 - self.delta}]^d, first {bad[0]}"
                )

    @property
    def Delta(self) -> float:
        return 1.0 / self.n

    @property
    def m(self) -> int:
        return len(self.spatial_points)

    @property
    def d(self) -> int:
        return len(self.spatial_points[0])

    def points_array(self) -> np.ndarray:
        return np.asarray(self.spatial_points, dtype=float)


def outside_margin(points: np.ndarray, delta: float) -> np.ndarray:
    """Boolean mask of points with a coordinate outside [delta, 1 - delta]."""
    points = np.atleast_2d(points)
    low = points < delta - INTERIOR_TOLERANCE
    high = points > 1.0 - delta + INTERIOR_TOLERANCE
    return np.any(low | high, axis=1)


@dataclass(frozen=True)
class TruncationSettings:
    """Cut-off K_t (modes {1..K_t}^d) and the initial condition of the truncation method."""
    cutoff: int
    initial: str = "zero"

    def __post_init__(self):
        if self.cutoff < 1:
            raise DomainError(f"truncation cutoff must be >= 1, got {self.cutoff}")
        if self.initial not in INITIAL_CONDITIONS:
            raise DomainError(f"initial condition must be one of {INITIAL_CONDITIONS}, got {self.initial!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {"cutoff": self.cutoff, "initial": self.initial}


@dataclass(frozen=True)
class ReplacementSettings:
    """
    Grid resolution M (points j / M), exact-mode bound L and variance cut-off K_v
    of the replacement method.
    """
    M: int
    L: int
    K_v: int

    def __post_init__(self):
        if self.M < 2:
            raise DomainError(f"M must be >= 2, got {self.M}")
        if not 1 <= self.L < self.K_v:
            raise DomainError(f"need 1 <= L < K_v, got L = {self.L}, K_v = {self.K_v}")

    def to_dict(self) -> Dict[str, Any]:
        return {"M": self.M, "L": self.L, "K_v": self.K_v}


@dataclass(frozen=True)
class FieldSample:
    """
    Field values X_{t_i}(y_j) on the grid t_i = i / n, i = 0..n.

    Attributes:
        values: read-only array of shape (n + 1, m)
        scheme: sampling scheme of the columns
        params: parameters the field was simulated with (None for observed data)
        seed: master seed of the simulation
        method: truncation, replacement or observed
        settings: simulator settings (cut-offs, initial condition)
    """
    values: np.ndarray
    scheme: SamplingScheme
    params: Optional[ModelParams] = None
    seed: Optional[int] = None
    method: str = "observed"
    settings: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.scheme.n + 1, self.scheme.m):
            raise DomainError(
                f"values have shape {values.shape}, expected ({self.scheme.n + 1}, {self.scheme.m})"
            )
        if self.method not in METHODS:
            raise DomainError(f"unknown method tag {self.method!r}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return self.scheme.n

    @property
    def m(self) -> int:
        return self.scheme.m

    @property
    def Delta(self) -> float:
        return self.scheme.Delta

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def select(self, indices: Sequence[int], delta: Optional[float] = None) -> "FieldSample":
        """Sample restricted to the given spatial columns."""
        idx = [int(j) for j in indices]
        if not idx:
            raise DomainError("selection of spatial points is empty")
        points = tuple(self.scheme.spatial_points[j] for j in idx)
        scheme = SamplingScheme(self.scheme.n, points, delta if delta is not None else self.scheme.delta)
        return FieldSample(self.values[:, idx], scheme, self.params, self.seed, self.method, dict(self.settings))

    def interior(self, delta: float) -> "FieldSample":
        """Sample restricted to the points in [delta, 1 - delta]^d."""
        keep = np.flatnonzero(~outside_margin(self.scheme.points_array(), delta))
        if keep.size == 0:
            raise InteriorMarginError(f"no spatial point lies in [{delta}, {1 - delta}]^d")
        return self.select(keep, delta)

    def scaled(self, factor: float) -> "FieldSample":
        return FieldSample(self.values * factor, self.scheme, self.params, self.seed, self.method, dict(self.settings))

    def metadata(self) -> Dict[str, Any]:
        return {
            "n": self.scheme.n,
            "spatial_points": [list(p) for p in self.scheme.spatial_points],
            "delta": self.scheme.delta,
            "params": self.params.to_dict() if self.params is not None else None,
            "seed": self.seed,
            "method": self.method,
            "settings": dict(self.settings),
        }
