# models/cache.py
# replacement 분산 캐시 모델입니다.
# 캐시가 속한 실행을 식별하는 키, 분산 테이블, MCP 리소스가 나열하는 요약 레코드.

import hashlib
import json
from dataclasses import dataclass
from typing import Any, Dict, Tuple

import numpy as np

from core.errors import DomainError
from models.params import ModelParams, MultiIndex
from models.sample import ReplacementSettings

CACHE_FORMAT_VERSION = 1


@dataclass(frozen=True)
class CacheKey:
    """Every field the replacement variances depend on."""
    M: int
    L: int
    K_v: int
    d: int
    theta0: float
    nu: Tuple[float, ...]
    eta: float
    sigma: float
    alpha_prime: float

    @classmethod
    def of(cls, params: ModelParams, settings: ReplacementSettings) -> "CacheKey":
        return cls(
            M=settings.M, L=settings.L, K_v=settings.K_v, d=params.d,
            theta0=params.theta0, nu=tuple(params.nu), eta=params.eta,
            sigma=params.sigma, alpha_prime=params.alpha_prime,
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "M": self.M, "L": self.L, "K_v": self.K_v, "d": self.d,
            "theta0": self.theta0, "nu": list(self.nu), "eta": self.eta,
            "sigma": self.sigma, "alpha_prime": self.alpha_prime,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CacheKey":
        return cls(
            M=int(data["M"]), L=int(data["L"]), K_v=int(data["K_v"]), d=int(data["d"]),
            theta0=float(data["theta0"]), nu=tuple(float(v) for v in data["nu"]),
            eta=float(data["eta"]), sigma=float(data["sigma"]),
            alpha_prime=float(data["alpha_prime"]),
        )

    def digest(self) -> str:
        # float repr round-trips exactly, so equal keys give equal digests
        canonical = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ReplacementCache:
    """
    Variances s~_m for m in {1..M-1}^d, stored in lexicographic order of m.

    Attributes:
        key: run the table was built for
        table: read-only array of length (M - 1)^d, every entry >= 0
    """
    key: CacheKey
    table: np.ndarray

    def __post_init__(self):
        table = np.array(self.table, dtype=float).ravel()
        expected = (self.key.M - 1) ** self.key.d
        if table.size != expected:
            raise DomainError(f"cache table has {table.size} entries, expected {expected}")
        if np.any(table < 0.0):
            raise DomainError("replacement variances must be non-negative")
        table.setflags(write=False)
        object.__setattr__(self, "table", table)

    def rank(self, m: MultiIndex) -> int:
        """Lexicographic rank of m in {1..M-1}^d."""
        base = self.key.M - 1
        if len(m) != self.key.d or any(v > base for v in m):
            raise DomainError(f"multi-index {m.k} is not in {{1..{base}}}^{self.key.d}")
        rank = 0
        for v in m:
            rank = rank * base + (v - 1)
        return rank

    def variance(self, m: MultiIndex) -> float:
        return float(self.table[self.rank(m)])

    def to_dict(self) -> Dict[str, Any]:
        return {
            "format_version": CACHE_FORMAT_VERSION,
            "key": self.key.to_dict(),
            "digest": self.key.digest(),
            "table": self.table.tolist(),
        }


@dataclass
class CacheInfo:
    """
    Summary of one persisted replacement cache.

    Attributes:
        path: file the cache is stored in
        digest: hash of the cache key
        M, L, K_v, d, alpha_prime: main key fields
        entries: number of stored variances
        loaded: whether the cache is held in the in-process registry
    """
    path: str
    digest: str
    M: int
    L: int
    K_v: int
    d: int
    alpha_prime: float
    entries: int
    loaded: bool
