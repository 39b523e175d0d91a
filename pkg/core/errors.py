# core/errors.py
# 라이브러리, CLI, MCP 도구가 공유하는 예외 계층입니다.
# 라이브러리는 예외를 던지고, main.py 가 exit_code 를 프로세스 종료 코드로 바꿉니다.


class SPDEError(Exception):
    """Base class for every error raised by this package."""

    exit_code: int = 1


class ConfigError(SPDEError):
    """Run configuration could not be parsed or validated."""

    exit_code = 2


class ModelParameterError(ConfigError, ValueError):
    """Model parameters violate an invariant (eta > 0, alpha' in (0,1), d >= 2, lambda_1 > 0)."""


class DomainError(SPDEError, ValueError):
    """An argument lies outside the domain of an operation."""

    exit_code = 2


class InteriorMarginError(DomainError):
    """An estimation point lies outside [delta, 1 - delta]^d."""


class OffGridError(SPDEError, ValueError):
    """The replacement method was asked for points off its equidistant grid."""

    exit_code = 2


class BudgetExceeded(SPDEError):
    """Mode x step work exceeds the configured budget."""

    exit_code = 3


class MetadataMismatch(SPDEError):
    """Sample metadata contradicts the known-parameter claims of a run."""

    exit_code = 4


class CacheKeyMismatch(MetadataMismatch):
    """A replacement-variance cache was built for a different run."""


class DataError(SPDEError):
    """Observed data is degenerate (e.g. a nonpositive realized volatility)."""

    exit_code = 5


class FullRankViolation(DataError):
    """Design matrix of the spatial points does not have full column rank."""

    def __init__(self, rank: int, columns: int):
        super().__init__(
            f"design matrix has rank {rank} < {columns}: the points (1, y_j) must span "
            f"R^{columns} (full-rank assumption of the log-linear model)"
        )
        self.rank = rank
        self.columns = columns
