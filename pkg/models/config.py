# models/config.py
# 실행 설정 모델입니다. JSON 문서 하나를 계산 전에 pydantic으로 검증합니다.
# 모든 섹션에서 알 수 없는 키는 거부됩니다.

from typing import Annotated, List, Literal, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from models.params import ModelParams
from models.sample import INTERIOR_TOLERANCE

NAMED_POINT_SETS = {
    "S3": ((0.1, 0.3), (0.4, 0.2), (0.7, 0.5)),
}

DEFAULT_DELTA = 0.05


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ModelSection(_Section):
    d: int = 2
    theta0: float = 0.0
    nu: List[float] = Field(default_factory=lambda: [0.0, 0.0])
    eta: float = 1.0
    sigma: float = 1.0
    alpha_prime: float = 0.5

    @model_validator(mode="after")
    def _check_params(self):
        self.to_params()
        return self

    def to_params(self) -> ModelParams:
        return ModelParams(self.d, self.theta0, tuple(self.nu), self.eta, self.sigma, self.alpha_prime)


class GridPoints(_Section):
    """Equidistant grid {j/M}^d; estimation uses its points inside [delta, 1 - delta]^d."""
    kind: Literal["grid"] = "grid"
    M: int = Field(10, ge=2)
    delta: float = Field(DEFAULT_DELTA, gt=0.0, lt=0.5)

    def points(self, d: int) -> Tuple[Tuple[float, ...], ...]:
        low, high = self.delta - INTERIOR_TOLERANCE, 1.0 - self.delta + INTERIOR_TOLERANCE
        axis = [j / self.M for j in range(self.M + 1) if low <= j / self.M <= high]
        grid = np.stack(np.meshgrid(*[axis] * d, indexing="ij"), axis=-1).reshape(-1, d)
        return tuple(tuple(float(c) for c in p) for p in grid)


class ExplicitPoints(_Section):
    kind: Literal["explicit"] = "explicit"
    points_list: List[List[float]] = Field(alias="points")
    delta: float = Field(DEFAULT_DELTA, gt=0.0, lt=0.5)

    def points(self, d: int) -> Tuple[Tuple[float, ...], ...]:
        if any(len(p) != d for p in self.points_list):
            raise ValueError(f"explicit points must have {d} coordinates")
        return tuple(tuple(float(c) for c in p) for p in self.points_list)


class NamedPoints(_Section):
    kind: Literal["named"] = "named"
    name: Literal["S3"] = "S3"
    delta: float = Field(DEFAULT_DELTA, gt=0.0, lt=0.5)

    def points(self, d: int) -> Tuple[Tuple[float, ...], ...]:
        pts = NAMED_POINT_SETS[self.name]
        if len(pts[0]) != d:
            raise ValueError(f"named point set {self.name} is {len(pts[0])}-dimensional, model has d = {d}")
        return pts


SpatialSpec = Annotated[Union[GridPoints, ExplicitPoints, NamedPoints], Field(discriminator="kind")]


class SchemeSection(_Section):
    n: int = Field(1000, ge=1)
    spatial: SpatialSpec = Field(default_factory=GridPoints)


class SimulatorSection(_Section):
    method: Literal["truncation", "replacement"] = "truncation"
    cutoff: int = Field(64, ge=1)
    initial: Literal["zero", "stationary"] = "zero"
    L: int = Field(10, ge=1)
    K_v: int = Field(1000, ge=2)
    allow_over_budget: bool = False

    @model_validator(mode="after")
    def _check_cutoffs(self):
        if self.method == "replacement" and not self.L < self.K_v:
            raise ValueError(f"replacement needs L < K_v, got L = {self.L}, K_v = {self.K_v}")
        return self


EstimatorName = Literal["sigma_point", "sigma", "quarticity", "log_linear", "alpha"]


class EstimationSection(_Section):
    estimators: List[EstimatorName] = Field(default_factory=lambda: ["sigma"])
    delta: Optional[float] = Field(None, gt=0.0, lt=0.5)
    log_linear_points: Optional[SpatialSpec] = None
    plug_in_alpha: bool = False
    ci_level: float = Field(0.95, gt=0.0, lt=1.0)
    point_index: int = Field(0, ge=0)


class RunConfig(_Section):
    """
    Complete description of a simulation, estimation or Monte Carlo run.

    Fields left as None (workers, series_tol, budget, cache_dir) are filled from the
    environment defaults when the run starts.
    """
    model: ModelSection = Field(default_factory=ModelSection)
    scheme: SchemeSection = Field(default_factory=SchemeSection)
    simulator: SimulatorSection = Field(default_factory=SimulatorSection)
    estimation: EstimationSection = Field(default_factory=EstimationSection)
    replications: int = Field(1, ge=1)
    seed: int = Field(0, ge=0, lt=2 ** 64)
    output_dir: str = "runs"
    workers: Optional[int] = Field(None, ge=1)
    series_tol: Optional[float] = Field(None, gt=0.0)
    budget: Optional[float] = Field(None, gt=0.0)
    field_format: Literal["csv", "npy"] = "csv"
    cache_dir: Optional[str] = None

    @model_validator(mode="after")
    def _check_consistency(self):
        d = self.model.d
        self.scheme.spatial.points(d)
        if self.estimation.log_linear_points is not None:
            self.estimation.log_linear_points.points(d)
        if self.simulator.method == "replacement" and self.scheme.spatial.kind != "grid":
            raise ValueError("the replacement method needs a grid spatial scheme")
        needs_even = self.estimation.plug_in_alpha or "alpha" in self.estimation.estimators
        if needs_even and self.scheme.n % 2:
            raise ValueError(f"the damping estimator thins the time grid, n = {self.scheme.n} must be even")
        return self

    @property
    def params(self) -> ModelParams:
        return self.model.to_params()

    @property
    def delta(self) -> float:
        if self.estimation.delta is not None:
            return self.estimation.delta
        return self.scheme.spatial.delta
