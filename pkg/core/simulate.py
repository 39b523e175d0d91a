# core/simulate.py
# 이 파일은 필드 시뮬레이션을 담당합니다.
# - truncation 방법: 모드 {1..K_t}^d 의 정확한 OU 경로
# - replacement 방법: 격자 {j/M}^d 위에서 저차 모드는 정확히, 고차 모드는 분산 대체
# replacement 분산 캐시(shell 합, JSON 저장, digest 키 레지스트리)도 여기서 관리합니다.

import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from core.errors import BudgetExceeded, CacheKeyMismatch, DomainError, OffGridError
from core.model import eigenfunction_matrix, eigenvalues, stationary_mode_variance
from core.numerics import RngStream
from models.cache import CACHE_FORMAT_VERSION, CacheInfo, CacheKey, ReplacementCache
from models.params import ModelParams, MultiIndex
from models.sample import FieldSample, ReplacementSettings, SamplingScheme, TruncationSettings

logger = logging.getLogger(__name__)

DEFAULT_BUDGET = 1e8
GRID_TOLERANCE = 1e-12
# upper bound on the number of floats held per block of noise
BLOCK_FLOATS = 4_000_000

# Replacement caches built or loaded in this process, keyed by the key digest.
_cache_registry: Dict[str, ReplacementCache] = {}
cache_stats: Dict[str, int] = {"hits": 0, "loads": 0, "builds": 0}


# --- grids and bases ---

def mode_grid(d: int, cutoff: int, start: int = 1) -> np.ndarray:
    """All multi-indices in {start..cutoff}^d in lexicographic order, shape (N, d)."""
    if cutoff < start:
        return np.empty((0, d), dtype=np.int64)
    axes = [np.arange(start, cutoff + 1, dtype=np.int64)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def equidistant_grid(M: int, d: int) -> np.ndarray:
    """Points j / M for j in {0..M}^d in lexicographic order, shape ((M + 1)^d, d)."""
    if M < 1:
        raise DomainError(f"M must be >= 1, got {M}")
    return mode_grid(d, M, start=0) / float(M)


def evaluation_matrix(params: ModelParams, modes: np.ndarray, points: np.ndarray) -> np.ndarray:
    """Matrix E with E[j, k] = e_k(y_j), computed once per simulation."""
    return eigenfunction_matrix(params, modes, points)


def discrete_inner_product(params: ModelParams, M: int, f: np.ndarray, g: np.ndarray) -> float:
    """
    <f, g>_{theta, M} = M^-d sum_j f(y_j) g(y_j) exp(sum_l kappa_l y_{j,l}) over the grid {j/M}^d.

    Args:
        params: model parameters (for d and kappa)
        M: grid resolution
        f, g: values on equidistant_grid(M, d), in its order
    """
    grid = equidistant_grid(M, params.d)
    f = np.asarray(f, dtype=float)
    g = np.asarray(g, dtype=float)
    if f.shape != (grid.shape[0],) or g.shape != (grid.shape[0],):
        raise DomainError(f"grid functions must have shape ({grid.shape[0]},)")
    weights = np.exp(grid @ np.asarray(params.kappa))
    return float(np.sum(f * g * weights) / M ** params.d)


# --- Ornstein-Uhlenbeck transitions ---

def ou_step(x, lam, sigma: float, alpha: float, Delta: float, z):
    """
    Exact transition of dx = -lambda x dt + sigma lambda^(-alpha/2) dW over Delta:
    x exp(-lambda Delta) + sigma sqrt((1 - exp(-2 lambda Delta)) / (2 lambda^(1+alpha))) z.

    Works elementwise on arrays.
    """
    lam = np.asarray(lam, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("OU rate lambda must be positive")
    if Delta <= 0:
        raise DomainError(f"Delta must be positive, got {Delta}")
    decay = np.exp(-lam * Delta)
    scale = sigma * np.sqrt(-np.expm1(-2.0 * lam * Delta) / (2.0 * lam ** (1.0 + alpha)))
    return x * decay + scale * z


def check_budget(work: float, budget: float, allow_over_budget: bool, what: str) -> None:
    """Refuse mode x step work above the budget unless explicitly allowed."""
    if work <= budget:
        return
    message = (
        f"{what} needs {work:.3g} mode-steps, above the budget of {budget:.3g}; "
        "runs of this size at full resolution take hours. Lower the cut-off or n, "
        "raise the budget, or set allow_over_budget"
    )
    if not allow_over_budget:
        raise BudgetExceeded(message)
    logger.warning(message)


def _mode_streams(stream: RngStream, ranks: np.ndarray) -> List[RngStream]:
    base = stream.substream(0)
    return [base.substream(int(r)) for r in ranks]


def _draw_block(streams: Sequence[RngStream], rows: int) -> np.ndarray:
    # column c holds the next `rows` draws of stream c
    out = np.empty((rows, len(streams)))
    for c, s in enumerate(streams):
        out[:, c] = s.normals(rows)
    return out


def _block_rows(columns: int, n: int) -> int:
    return max(1, min(n, BLOCK_FLOATS // max(1, columns)))


def _ou_paths(params: ModelParams, lam: np.ndarray, n: int, streams: Sequence[RngStream],
              stationary: bool):
    """
    Yield (start, paths) blocks of exact OU paths of the modes, paths[i, k] = x_k(t_{start + i}).

    The first block starts at row 0 with the initial state; a stationary start
    consumes the first draw of every mode stream.
    """
    Delta = 1.0 / n
    decay = np.exp(-lam * Delta)
    scale = params.sigma * np.sqrt(-np.expm1(-2.0 * lam * Delta) / (2.0 * lam ** (1.0 + params.alpha)))
    if stationary:
        x = np.sqrt(stationary_mode_variance(params, lam)) * _draw_block(streams, 1)[0]
    else:
        x = np.zeros(lam.shape[0])
    yield 0, x[None, :].copy()
    rows = _block_rows(lam.shape[0], n)
    step = 1
    while step <= n:
        count = min(rows, n - step + 1)
        z = _draw_block(streams, count)
        block = np.empty_like(z)
        for i in range(count):
            x = x * decay + scale * z[i]
            block[i] = x
        yield step, block
        logger.debug("OU block %d..%d of %d done", step, step + count - 1, n)
        step += count


# --- truncation method ---

def simulate_truncation(params: ModelParams, n: int, spatial_points: Sequence[Sequence[float]],
                        settings: TruncationSettings, stream: RngStream,
                        budget: float = DEFAULT_BUDGET, allow_over_budget: bool = False) -> FieldSample:
    """
    Simulate X_{t_i}(y_j) = sum_{k in {1..K_t}^d} x_k(t_i) e_k(y_j) with exact OU coordinate paths.

    Mode k of lexicographic rank r draws its noise from stream.substream(0).substream(r),
    so the output does not depend on how the work is scheduled.

    Args:
        params: model parameters
        n: number of time steps on [0, 1]
        spatial_points: evaluation points in [0, 1]^d
        settings: cut-off and initial condition
        stream: replication stream
        budget: maximal modes x steps
        allow_over_budget: run anyway (with a warning) above the budget

    Returns:
        FieldSample with method "truncation".

    Raises:
        BudgetExceeded: if K_t^d * n exceeds the budget and no override is given.
    """
    scheme = SamplingScheme(n, tuple(tuple(p) for p in spatial_points))
    modes = mode_grid(params.d, settings.cutoff)
    check_budget(float(modes.shape[0]) * n, budget, allow_over_budget, "truncation simulation")

    lam = eigenvalues(params, modes)
    E = evaluation_matrix(params, modes, scheme.points_array())
    streams = _mode_streams(stream, np.arange(modes.shape[0]))
    values = np.empty((n + 1, scheme.m))
    for start, paths in _ou_paths(params, lam, n, streams, settings.initial == "stationary"):
        values[start:start + paths.shape[0]] = paths @ E.T
    logger.debug("truncation: %d modes, %d steps, %d points", modes.shape[0], n, scheme.m)
    return FieldSample(values, scheme, params, stream.seed, "truncation", settings.to_dict())


# --- replacement method ---

def axis_index_set(k: int, M: int, bound: int) -> List[int]:
    """
    Sorted ({k + 2lM} U {2M - k + 2lM}) restricted to (0, bound), l >= 0.

    Raises:
        DomainError: if k is not in [1, M - 1].
    """
    if not 1 <= k <= M - 1:
        raise DomainError(f"k must lie in [1, {M - 1}], got {k}")
    plus = range(k, bound, 2 * M)
    minus = range(2 * M - k, bound, 2 * M)
    return sorted(set(plus) | set(minus))


def aliased_index(modes: np.ndarray, M: int) -> np.ndarray:
    """Grid mode m in {1..M-1}^d that each mode aliases to (components not divisible by M)."""
    r = np.mod(modes, 2 * M)
    return np.where(r < M, r, 2 * M - r)


def _lexicographic_rank(indices: np.ndarray, base: int, start: int = 1) -> np.ndarray:
    rank = np.zeros(indices.shape[0], dtype=np.int64)
    for axis in range(indices.shape[1]):
        rank = rank * base + (indices[:, axis] - start)
    return rank


def replacement_variance(params: ModelParams, M: int, L: int, K_v: int, m: Union[MultiIndex, Sequence[int]]) -> float:
    """
    s~_m = sum over l in I_m with l in (0, K_v M)^d but not in (0, L M)^d of sigma^2 / (2 lambda_l^(1+alpha)).

    Args:
        params: model parameters
        M: grid resolution
        L: exact-mode bound
        K_v: variance cut-off
        m: grid mode in {1..M-1}^d
    """
    m = m if isinstance(m, MultiIndex) else MultiIndex.of(m)
    if len(m) != params.d:
        raise DomainError(f"multi-index {m.k} has length {len(m)}, expected d = {params.d}")
    if L >= K_v:
        return 0.0
    axes = [np.asarray(axis_index_set(v, M, K_v * M), dtype=float) for v in m]
    inner = [axes[l] for l in range(1, params.d)]
    inner_sq = np.zeros(1)
    inner_low = np.ones(1, dtype=bool)
    for values in inner:
        inner_sq = np.add.outer(inner_sq, values * values).ravel()
        inner_low = np.logical_and.outer(inner_low, values < L * M).ravel()
    total = 0.0
    for first in axes[0]:
        lam = params.eigenvalue_offset + math.pi ** 2 * params.eta * (first * first + inner_sq)
        weights = stationary_mode_variance(params, lam)
        if first < L * M:
            weights = np.where(inner_low, 0.0, weights)
        total += float(np.sum(weights))
    return total


def build_cache_table(params: ModelParams, settings: ReplacementSettings, workers: int = 1) -> np.ndarray:
    """Shell sums s~_m for every m in {1..M-1}^d, lexicographic order, computed in parallel over m."""
    grid_modes = mode_grid(params.d, settings.M - 1)

    def one(m: np.ndarray) -> float:
        return replacement_variance(params, settings.M, settings.L, settings.K_v, tuple(int(v) for v in m))

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return np.asarray(list(pool.map(one, grid_modes)))
    return np.asarray([one(m) for m in grid_modes])


def cache_path(cache_dir: Union[str, Path], key: CacheKey) -> Path:
    return Path(cache_dir) / f"replacement-{key.digest()}.json"


def save_cache(cache: ReplacementCache, path: Union[str, Path]) -> Path:
    """Write the cache as JSON with a header of format version and key fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(".tmp")
    with open(tmp, "w") as f:
        json.dump(cache.to_dict(), f)
    os.replace(tmp, path)
    logger.info("replacement cache %s written to %s", cache.key.digest(), path)
    return path


def load_cache(path: Union[str, Path], expected: Optional[CacheKey] = None) -> ReplacementCache:
    """
    Read a cache file.

    Raises:
        CacheKeyMismatch: if the stored key differs from `expected` or the format is unknown.
    """
    with open(path, "r") as f:
        data = json.load(f)
    if data.get("format_version") != CACHE_FORMAT_VERSION:
        raise CacheKeyMismatch(f"{path}: unsupported cache format {data.get('format_version')!r}")
    key = CacheKey.from_dict(data["key"])
    if expected is not None and key != expected:
        raise CacheKeyMismatch(f"{path}: cache built for {key.to_dict()}, requested {expected.to_dict()}")
    return ReplacementCache(key, np.asarray(data["table"], dtype=float))


def build_cache(params: ModelParams, settings: ReplacementSettings,
                cache_dir: Optional[Union[str, Path]] = None, workers: int = 1) -> ReplacementCache:
    """
    Replacement cache for (params, settings): from the registry, from disk, or freshly built.

    A fresh build is persisted under cache_dir; a failed write only logs a warning.
    """
    key = CacheKey.of(params, settings)
    digest = key.digest()
    if digest in _cache_registry and _cache_registry[digest].key == key:
        cache_stats["hits"] += 1
        logger.debug("replacement cache %s: registry hit", digest)
        return _cache_registry[digest]

    if cache_dir is not None:
        path = cache_path(cache_dir, key)
        if path.exists():
            try:
                cache = load_cache(path, expected=key)
                cache_stats["loads"] += 1
                _cache_registry[digest] = cache
                logger.debug("replacement cache %s: loaded from %s", digest, path)
                return cache
            except (CacheKeyMismatch, OSError, ValueError, KeyError) as e:
                logger.warning("ignoring unusable cache file %s: %s", path, e)

    logger.info("building replacement cache %s (M=%d, L=%d, K_v=%d)", digest, settings.M, settings.L, settings.K_v)
    cache = ReplacementCache(key, build_cache_table(params, settings, workers))
    cache_stats["builds"] += 1
    _cache_registry[digest] = cache
    if cache_dir is not None:
        try:
            save_cache(cache, cache_path(cache_dir, key))
        except OSError as e:
            logger.warning("could not persist replacement cache %s: %s", digest, e)
    return cache


def list_caches(cache_dir: Union[str, Path]) -> List[CacheInfo]:
    """Summaries of every readable cache file under cache_dir."""
    infos = []
    for path in sorted(Path(cache_dir).glob("replacement-*.json")):
        try:
            cache = load_cache(path)
        except (CacheKeyMismatch, OSError, ValueError, KeyError) as e:
            logger.warning("skipping cache file %s: %s", path, e)
            continue
        key = cache.key
        infos.append(CacheInfo(
            path=str(path), digest=key.digest(), M=key.M, L=key.L, K_v=key.K_v, d=key.d,
            alpha_prime=key.alpha_prime, entries=int(cache.table.size),
            loaded=key.digest() in _cache_registry,
        ))
    return infos


def clear_cache_registry() -> None:
    _cache_registry.clear()
    for name in cache_stats:
        cache_stats[name] = 0


def grid_columns(M: int, d: int, points: Optional[Sequence[Sequence[float]]]) -> np.ndarray:
    """
    Rows of equidistant_grid(M, d) matching the requested points (all rows when None).

    Raises:
        OffGridError: if a point is not of the form j / M.
    """
    if points is None:
        return np.arange((M + 1) ** d)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if pts.shape[1] != d:
        raise DomainError(f"points have dimension {pts.shape[1]}, expected {d}")
    scaled = pts * M
    j = np.rint(scaled)
    off = np.any(np.abs(scaled - j) > GRID_TOLERANCE * M, axis=1) | np.any((j < 0) | (j > M), axis=1)
    if off.any():
        first = pts[np.flatnonzero(off)[0]].tolist()
        raise OffGridError(
            f"point {first} is not on the grid {{j/{M}}}^{d}; the replacement method only "
            "produces grid values, use the truncation method for arbitrary points"
        )
    return _lexicographic_rank(j.astype(np.int64), M + 1, start=0)


def simulate_replacement(params: ModelParams, n: int, settings: ReplacementSettings,
                         cache: ReplacementCache, stream: RngStream,
                         points: Optional[Sequence[Sequence[float]]] = None,
                         budget: float = DEFAULT_BUDGET, allow_over_budget: bool = False) -> FieldSample:
    """
    Simulate the field on the grid {j/M}^d by the replacement method with zero initial condition.

    U_m(t_i) sums the exact OU paths x_l over l in I_m with l in (0, LM)^d and adds a fresh
    N(0, s~_m) draw at every step i >= 1; X_{t_i}(y_j) = sum_m U_m(t_i) e_m(y_j). Modes with
    a component divisible by M vanish on the grid and are not simulated. Exact mode l draws
    from stream.substream(0).substream(rank of l in {1..LM-1}^d); the replacement draws of m
    come from stream.substream(1).substream(rank of m in {1..M-1}^d).

    Args:
        params: model parameters
        n: number of time steps on [0, 1]
        settings: grid resolution and cut-offs
        cache: replacement variances for exactly this run
        stream: replication stream
        points: optional subset of grid points (default: the whole grid, boundary included)

    Raises:
        CacheKeyMismatch: if the cache was built for another (params, settings).
        OffGridError: if a requested point is off the grid.
        BudgetExceeded: if the work exceeds the budget without override.
    """
    key = CacheKey.of(params, settings)
    if cache.key != key:
        raise CacheKeyMismatch(
            f"cache {cache.key.digest()} was built for {cache.key.to_dict()}, run needs {key.to_dict()}"
        )
    M, L, d = settings.M, settings.L, params.d
    grid = equidistant_grid(M, d)
    columns = grid_columns(M, d, points)
    scheme = SamplingScheme(n, tuple(tuple(p) for p in grid[columns]))

    all_modes = mode_grid(d, L * M - 1)
    keep = np.all(np.mod(all_modes, M) != 0, axis=1)
    modes = all_modes[keep]
    ranks = np.flatnonzero(keep)
    grid_modes = mode_grid(d, M - 1)
    check_budget(float(modes.shape[0] + grid_modes.shape[0]) * n, budget, allow_over_budget,
                 "replacement simulation")

    lam = eigenvalues(params, modes)
    target = _lexicographic_rank(aliased_index(modes, M), M - 1)
    incidence = sparse.csr_matrix(
        (np.ones(modes.shape[0]), (np.arange(modes.shape[0]), target)),
        shape=(modes.shape[0], grid_modes.shape[0]),
    )
    E = evaluation_matrix(params, grid_modes, scheme.points_array())
    scale = np.sqrt(cache.table)
    noise_streams = [stream.substream(1).substream(r) for r in range(grid_modes.shape[0])]

    values = np.empty((n + 1, scheme.m))
    # 블록 단위로 OU 경로를 만들고, 같은 격자 모드로 접히는 모드들을 합칩니다.
    for start, paths in _ou_paths(params, lam, n, _mode_streams(stream, ranks), stationary=False):
        U = np.asarray((incidence.T @ paths.T).T)
        if start > 0:
            # 고차 모드 꼬리는 매 단계 새 N(0, s~_m) 로 대체합니다.
            U += _draw_block(noise_streams, paths.shape[0]) * scale
        values[start:start + paths.shape[0]] = U @ E.T
    logger.debug("replacement: %d exact modes, %d grid modes, %d steps", modes.shape[0], grid_modes.shape[0], n)
    settings_record = dict(settings.to_dict(), cache=key.digest())
    return FieldSample(values, scheme, params, stream.seed, "replacement", settings_record)
