# models/params.py
# SPDE 구조 파라미터와 스펙트럼 모드의 다중 인덱스 모델입니다.

import math
from dataclasses import dataclass
from typing import Iterable, Tuple

from core.errors import DomainError, ModelParameterError


@dataclass(frozen=True)
class ModelParams:
    """
    Parameters of the second-order SPDE on [0, 1]^d with damped cylindrical noise.

    Attributes:
        d: spatial dimension (d >= 2)
        theta0: zero-order coefficient
        nu: first-order coefficients, one per axis
        eta: diffusivity (> 0)
        sigma: volatility (>= 0; zero gives the deterministic zero field)
        alpha_prime: pure damping parameter in (0, 1)
    """
    d: int
    theta0: float
    nu: Tuple[float, ...]
    eta: float
    sigma: float
    alpha_prime: float

    def __post_init__(self):
        object.__setattr__(self, "nu", tuple(float(v) for v in self.nu))
        if self.d < 2:
            raise ModelParameterError(
                f"d = {self.d}: only d >= 2 is supported, the damping band "
                "alpha in (d/2 - 1, d/2) is built for multi-dimensional fields"
            )
        if len(self.nu) != self.d:
            raise ModelParameterError(f"nu has {len(self.nu)} entries, expected d = {self.d}")
        if not self.eta > 0:
            raise ModelParameterError(f"eta must be positive, got {self.eta}")
        if not self.sigma >= 0:
            raise ModelParameterError(f"sigma must be non-negative, got {self.sigma}")
        if not 0.0 < self.alpha_prime < 1.0:
            raise ModelParameterError(f"alpha_prime must lie in (0, 1), got {self.alpha_prime}")
        if not self.smallest_eigenvalue > 0:
            raise ModelParameterError(
                f"smallest eigenvalue lambda_(1,...,1) = {self.smallest_eigenvalue} must be positive"
            )

    @property
    def alpha(self) -> float:
        return self.d / 2.0 - 1.0 + self.alpha_prime

    @property
    def kappa(self) -> Tuple[float, ...]:
        return tuple(v / self.eta for v in self.nu)

    @property
    def sigma0_sq(self) -> float:
        return self.sigma ** 2 / self.eta ** (self.d / 2.0)

    @property
    def eigenvalue_offset(self) -> float:
        """-theta0 + sum_l nu_l^2 / (4 eta), the k-independent part of every eigenvalue."""
        return -self.theta0 + sum(v * v / (4.0 * self.eta) for v in self.nu)

    @property
    def smallest_eigenvalue(self) -> float:
        return self.eigenvalue_offset + self.d * math.pi ** 2 * self.eta

    def with_alpha_prime(self, alpha_prime: float) -> "ModelParams":
        return ModelParams(self.d, self.theta0, self.nu, self.eta, self.sigma, alpha_prime)

    def to_dict(self) -> dict:
        return {
            "d": self.d,
            "theta0": self.theta0,
            "nu": list(self.nu),
            "eta": self.eta,
            "sigma": self.sigma,
            "alpha_prime": self.alpha_prime,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        return cls(
            d=int(data["d"]),
            theta0=float(data["theta0"]),
            nu=tuple(data["nu"]),
            eta=float(data["eta"]),
            sigma=float(data["sigma"]),
            alpha_prime=float(data["alpha_prime"]),
        )


@dataclass(frozen=True)
class MultiIndex:
    """Mode index k in N^d, every component >= 1."""
    k: Tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "k", tuple(int(v) for v in self.k))
        if not self.k or any(v < 1 for v in self.k):
            raise DomainError(f"multi-index components must be >= 1, got {self.k}")

    @classmethod
    def of(cls, values: Iterable[int]) -> "MultiIndex":
        return cls(tuple(values))

    def __len__(self) -> int:
        return len(self.k)

    def __iter__(self):
        return iter(self.k)
