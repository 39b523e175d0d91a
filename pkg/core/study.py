# core/study.py
# CLI와 MCP 도구가 공통으로 사용하는 실행 관리 모듈입니다.
# 필드를 시뮬레이션해 저장하고, 저장된 필드에서 추정하고, 병렬 반복으로
# Monte Carlo 실험을 실행합니다. 모든 출력 파일에는 확정된 설정이 함께 기록됩니다.

import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from core.context import use_run_defaults
from core.errors import ConfigError, MetadataMismatch, SPDEError
from core.estimate import KnownParameters, estimate_pipeline, validate_scheme
from core.model import (
    alpha_clt_variance,
    lambda_const,
    natural_rescaling_constant,
    psi_clt_covariance,
    rescaling_constant_K,
    sigma_clt_variance,
    theoretical_autocorrelation,
    theoretical_autocovariance,
    theoretical_mean_sq_increment,
    upsilon,
    upsilon_clt_covariance,
)
from core.numerics import RngStream, summary
from core.simulate import build_cache, simulate_replacement, simulate_truncation
from models.cache import CacheKey
from models.config import RunConfig
from models.params import ModelParams
from models.report import EstimationReport, StudyEntry, StudySummary, report_rows
from models.sample import FieldSample, ReplacementSettings, SamplingScheme, TruncationSettings, outside_margin

logger = logging.getLogger(__name__)

FIELD_STEM = "field"
ESTIMATES_FILE = "estimates.json"
MC_CSV = "mc_estimates.csv"
MC_SUMMARY = "mc_summary.json"
CSV_COLUMNS = ["run_id", "estimator", "component", "value", "se", "ci_lo", "ci_hi", "seed"]
POINT_MATCH_TOLERANCE = 1e-12


# --- configuration ---

@use_run_defaults
def resolve_config(config: RunConfig, series_tol: Optional[float] = None, budget: Optional[float] = None,
                   cache_dir: Optional[str] = None, workers: Optional[int] = None) -> RunConfig:
    """Copy of the config with every unset knob taken from the arguments or the environment."""
    update = {}
    for name, value in (("series_tol", series_tol), ("budget", budget),
                        ("cache_dir", cache_dir), ("workers", workers)):
        if getattr(config, name) is None:
            update[name] = value
    return config.model_copy(update=update)


def config_record(config: RunConfig) -> Dict[str, Any]:
    return config.model_dump(mode="json", by_alias=True)


def _dump_json(data: Dict[str, Any], path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(data, f, indent=2, sort_keys=True)
        f.write("\n")
    logger.info("wrote %s", path)
    return path


# --- simulation ---

def _match_points(candidates: Sequence[Sequence[float]], points: Sequence[Sequence[float]]) -> List[int]:
    arr = np.asarray(candidates, dtype=float)
    indices = []
    for p in points:
        hits = np.flatnonzero(np.all(np.abs(arr - np.asarray(p, dtype=float)) <= POINT_MATCH_TOLERANCE, axis=1))
        if hits.size == 0:
            raise MetadataMismatch(f"point {list(p)} is not among the sample's spatial points")
        indices.append(int(hits[0]))
    return indices


def simulation_points(config: RunConfig) -> Tuple[Tuple[float, ...], ...]:
    """Points the truncation method evaluates: the scheme points, then any extra log-linear points."""
    d = config.model.d
    points = list(config.scheme.spatial.points(d))
    if config.estimation.log_linear_points is not None:
        for p in config.estimation.log_linear_points.points(d):
            if p not in points:
                points.append(p)
    return tuple(points)


def replication_stream(seed: int, r: int) -> RngStream:
    return RngStream(seed, (r,))


def simulate_sample(config: RunConfig, stream: RngStream) -> FieldSample:
    """One field sample for a resolved config."""
    params = config.params
    sim = config.simulator
    if sim.method == "truncation":
        settings = TruncationSettings(sim.cutoff, sim.initial)
        return simulate_truncation(params, config.scheme.n, simulation_points(config), settings, stream,
                                   budget=config.budget, allow_over_budget=sim.allow_over_budget)
    settings = ReplacementSettings(config.scheme.spatial.M, sim.L, sim.K_v)
    cache = build_cache(params, settings, config.cache_dir, config.workers)
    return simulate_replacement(params, config.scheme.n, settings, cache, stream,
                                budget=config.budget, allow_over_budget=sim.allow_over_budget)


def write_sample(sample: FieldSample, config: RunConfig, out_dir: Union[str, Path]) -> Path:
    """Write the field values (csv or npy) and a JSON metadata file; returns the metadata path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    values_name = f"{FIELD_STEM}.{config.field_format}"
    values_path = out_dir / values_name
    if config.field_format == "csv":
        columns = [f"y{j}" for j in range(sample.m)]
        pd.DataFrame(sample.values, columns=columns).to_csv(values_path, index=False)
    else:
        np.save(values_path, sample.values)
    logger.info("wrote %s", values_path)
    meta = {
        "config": config_record(config),
        "sample": sample.metadata(),
        "values_file": values_name,
        "format": config.field_format,
    }
    return _dump_json(meta, out_dir / f"{FIELD_STEM}.json")


def read_sample(path: Union[str, Path]) -> FieldSample:
    """Read a sample written by write_sample from its metadata file."""
    path = Path(path)
    with open(path, "r") as f:
        meta = json.load(f)
    values_path = path.parent / meta["values_file"]
    if meta["format"] == "csv":
        values = pd.read_csv(values_path).to_numpy(dtype=float)
    else:
        values = np.load(values_path)
    info = meta["sample"]
    scheme = SamplingScheme(int(info["n"]), tuple(tuple(p) for p in info["spatial_points"]), info.get("delta"))
    params = ModelParams.from_dict(info["params"]) if info.get("params") else None
    return FieldSample(values, scheme, params, info.get("seed"), info.get("method", "observed"),
                       info.get("settings") or {})


@use_run_defaults
def run_simulate(config: RunConfig, out_dir: Optional[Union[str, Path]] = None,
                 series_tol: Optional[float] = None, budget: Optional[float] = None,
                 cache_dir: Optional[str] = None, workers: Optional[int] = None) -> Path:
    """
    Simulate one field with stream (seed, 0) and write it under the output directory.

    Returns:
        Path of the metadata JSON file.
    """
    config = resolve_config(config, series_tol=series_tol, budget=budget, cache_dir=cache_dir, workers=workers)
    sample = simulate_sample(config, replication_stream(config.seed, 0))
    return write_sample(sample, config, out_dir or config.output_dir)


# --- estimation ---

def _close(a: float, b: float) -> bool:
    return math.isclose(a, b, rel_tol=1e-12, abs_tol=1e-12)


def check_metadata(sample: FieldSample, config: RunConfig) -> None:
    """
    Raise MetadataMismatch if the sample was simulated with parameters that contradict
    the known parameters the configured estimators rely on.
    """
    if sample.scheme.d != config.model.d:
        raise MetadataMismatch(f"sample has d = {sample.scheme.d}, config has d = {config.model.d}")
    if sample.params is None:
        return
    claimed = config.params
    estimators = set(config.estimation.estimators)
    uses_alpha = bool(estimators & {"sigma_point", "sigma", "quarticity", "log_linear"})
    uses_eta_kappa = bool(estimators & {"sigma_point", "sigma", "quarticity"})
    if uses_alpha and not config.estimation.plug_in_alpha:
        if not _close(sample.params.alpha_prime, claimed.alpha_prime):
            raise MetadataMismatch(
                f"sample alpha' = {sample.params.alpha_prime}, config claims {claimed.alpha_prime}"
            )
    if uses_eta_kappa:
        if not _close(sample.params.eta, claimed.eta):
            raise MetadataMismatch(f"sample eta = {sample.params.eta}, config claims {claimed.eta}")
        if not all(_close(a, b) for a, b in zip(sample.params.kappa, claimed.kappa)):
            raise MetadataMismatch(f"sample kappa = {sample.params.kappa}, config claims {claimed.kappa}")


def estimate_sample(config: RunConfig, sample: FieldSample) -> Dict[str, EstimationReport]:
    """Run the configured estimators on the interior points of a sample."""
    delta = config.delta
    interior = sample.interior(delta)
    indices = None
    if config.estimation.log_linear_points is not None:
        indices = _match_points(interior.scheme.spatial_points,
                                config.estimation.log_linear_points.points(config.model.d))
    return estimate_pipeline(
        interior,
        KnownParameters.from_params(config.params),
        config.estimation.estimators,
        delta=delta,
        ci_level=config.estimation.ci_level,
        plug_in_alpha=config.estimation.plug_in_alpha,
        point_index=config.estimation.point_index,
        log_linear_indices=indices,
        tol=config.series_tol,
    )


@use_run_defaults
def run_estimate(config: RunConfig, sample_path: Union[str, Path], out_dir: Optional[Union[str, Path]] = None,
                 series_tol: Optional[float] = None, budget: Optional[float] = None,
                 cache_dir: Optional[str] = None, workers: Optional[int] = None) -> Path:
    """
    Estimate from a written sample and write the reports as JSON.

    Raises:
        MetadataMismatch: if the sample contradicts the config's known parameters.
        DataError: if the data is degenerate (nonpositive realized volatility, rank deficiency).
    """
    config = resolve_config(config, series_tol=series_tol, budget=budget, cache_dir=cache_dir, workers=workers)
    sample = read_sample(sample_path)
    check_metadata(sample, config)
    reports = estimate_sample(config, sample)
    interior = sample.interior(config.delta)
    alpha_for_checks = (reports["alpha"].value("alpha_prime") if config.estimation.plug_in_alpha
                        else config.model.alpha_prime)
    alpha_for_checks = min(max(alpha_for_checks, 1e-3), 1.0 - 1e-3)
    data = {
        "config": config_record(config),
        "sample": sample.metadata(),
        "scheme": validate_scheme(interior, alpha_for_checks).to_dict(),
        "reports": {name: report.to_dict() for name, report in reports.items()},
    }
    return _dump_json(data, Path(out_dir or config.output_dir) / ESTIMATES_FILE)


# --- constants ---

def compute_constants(params: ModelParams, tol: float, y: Optional[Sequence[float]] = None,
                      n: Optional[int] = None) -> Dict[str, Any]:
    """K, Upsilon, Lambda and the limit increment moments at y (default the centre) for Delta = 1/n."""
    point = tuple(y) if y is not None else (0.5,) * params.d
    Delta = 1.0 / n if n else 1e-4
    a = params.alpha_prime
    return {
        "params": params.to_dict(),
        "alpha": params.alpha,
        "kappa": list(params.kappa),
        "sigma0_sq": params.sigma0_sq,
        "K": rescaling_constant_K(params),
        "K_eta1": natural_rescaling_constant(params.d, a),
        "upsilon": upsilon(a, tol),
        "lambda": lambda_const(a, tol),
        "autocorrelation_lag1": theoretical_autocorrelation(a, 1),
        "y": list(point),
        "Delta": Delta,
        "mean_sq_increment": theoretical_mean_sq_increment(params, point, Delta),
        "autocovariance_lag1": theoretical_autocovariance(params, point, Delta, 1),
    }


@use_run_defaults
def run_build_cache(config: RunConfig, cache_dir: Optional[str] = None, workers: Optional[int] = None) -> Dict[str, Any]:
    """Build (or load) and persist the replacement cache of a config."""
    config = resolve_config(config, cache_dir=cache_dir, workers=workers)
    if config.scheme.spatial.kind != "grid":
        raise ConfigError("a replacement cache needs a grid spatial scheme (scheme.spatial.kind = grid)")
    settings = ReplacementSettings(config.scheme.spatial.M, config.simulator.L, config.simulator.K_v)
    cache = build_cache(config.params, settings, config.cache_dir, config.workers)
    key = CacheKey.of(config.params, settings)
    return {
        "digest": key.digest(),
        "key": key.to_dict(),
        "entries": int(cache.table.size),
        "min": float(cache.table.min()),
        "max": float(cache.table.max()),
        "cache_dir": config.cache_dir,
    }


# --- Monte Carlo ---

def _run_replication(config_data: Dict[str, Any], r: int) -> Tuple[int, List[Dict[str, Any]], Optional[str]]:
    # top level so that process pools can pickle it
    config = RunConfig.model_validate(config_data)
    try:
        sample = simulate_sample(config, replication_stream(config.seed, r))
        reports = estimate_sample(config, sample)
    except (SPDEError, ArithmeticError, np.linalg.LinAlgError) as e:
        return r, [], f"{type(e).__name__}: {e}"
    rows = []
    for report in reports.values():
        for row in report_rows(report):
            rows.append(dict(row, run_id=r, seed=config.seed))
    return r, rows, None


def estimation_points(config: RunConfig) -> Tuple[Tuple[float, ...], ...]:
    points = np.asarray(config.scheme.spatial.points(config.model.d))
    keep = ~outside_margin(points, config.delta)
    return tuple(tuple(p) for p in points[keep])


def theoretical_values(config: RunConfig) -> Dict[Tuple[str, str], Tuple[Optional[float], Optional[float]]]:
    """(truth, asymptotic variance) per (estimator, component) at the true parameters."""
    params = config.params
    tol = config.series_tol
    a, d, n = params.alpha_prime, params.d, config.scheme.n
    sigma_sq = params.sigma ** 2
    points = estimation_points(config)
    m = len(points)
    K1 = natural_rescaling_constant(d, a)
    out: Dict[Tuple[str, str], Tuple[Optional[float], Optional[float]]] = {
        ("sigma", "sigma_sq"): (sigma_sq, sigma_clt_variance(a, sigma_sq, n, m, tol)),
        ("sigma_point", "sigma_sq"): (sigma_sq, sigma_clt_variance(a, sigma_sq, n, 1, tol)),
        ("quarticity", "sigma4"): (sigma_sq ** 2, None),
    }
    if n % 2 == 0:
        out[("alpha", "alpha_prime")] = (a, alpha_clt_variance(a, n // 2, m, tol))
    ll_points = (config.estimation.log_linear_points.points(d)
                 if config.estimation.log_linear_points is not None else points)
    if len(ll_points) >= d + 1:
        try:
            cov_psi = psi_clt_covariance(a, ll_points, config.delta, n, tol)
            cov_ups = upsilon_clt_covariance(a, params.sigma0_sq, ll_points, config.delta, n, tol)
        except np.linalg.LinAlgError:
            cov_psi = cov_ups = None
        psi = [math.log(params.sigma0_sq * K1)] + [-k for k in params.kappa]
        for l in range(d + 1):
            out[("log_linear", f"psi_{l}")] = (psi[l], None if cov_psi is None else float(cov_psi[l, l]))
        out[("log_linear", "sigma0_sq")] = (params.sigma0_sq, None if cov_ups is None else float(cov_ups[0, 0]))
        for l in range(1, d + 1):
            out[("log_linear", f"kappa_{l}")] = (params.kappa[l - 1], None if cov_ups is None else float(cov_ups[l, l]))
    return out


def summarize_study(config: RunConfig, table: pd.DataFrame, failures: Sequence[Tuple[int, str]],
                    csv_name: Optional[str] = None) -> StudySummary:
    """Per-component means, variances, normalized errors and interval coverage."""
    theory = theoretical_values(config)
    entries = []
    if not table.empty:
        for (estimator, component), group in table.groupby(["estimator", "component"], sort=True):
            truth, variance = theory.get((estimator, component), (None, None))
            values = group["value"].to_numpy(dtype=float)
            normalized = None
            if truth is not None and variance:
                normalized = summary((values - truth) / math.sqrt(variance))
            with_ci = group.dropna(subset=["ci_lo", "ci_hi"])
            covered = 0
            if truth is not None:
                covered = int(((with_ci["ci_lo"] <= truth) & (truth <= with_ci["ci_hi"])).sum())
            entries.append(StudyEntry(
                estimator=estimator, component=component, truth=truth, summary=summary(values),
                theoretical_variance=variance, normalized_errors=normalized,
                covered=covered, with_interval=int(len(with_ci)),
            ))
    succeeded = config.replications - len(failures)
    return StudySummary(config.replications, succeeded, tuple(failures), tuple(entries), config_record(config),
                        csv_name)


@use_run_defaults
def run_mc(config: RunConfig, out_dir: Optional[Union[str, Path]] = None,
           series_tol: Optional[float] = None, budget: Optional[float] = None,
           cache_dir: Optional[str] = None, workers: Optional[int] = None) -> Tuple[Path, Path, StudySummary]:
    """
    R independent replications; replication r simulates with stream (seed, r).

    Writes one CSV row per (replication, estimator, component) and a JSON summary.
    A failing replication is recorded and skipped; the summary then reports complete = false.

    Returns:
        (csv path, summary path, summary)
    """
    config = resolve_config(config, series_tol=series_tol, budget=budget, cache_dir=cache_dir, workers=workers)
    if config.simulator.method == "replacement":
        # 캐시는 한 번만 만들고, 워커 프로세스는 디스크에서 읽습니다.
        settings = ReplacementSettings(config.scheme.spatial.M, config.simulator.L, config.simulator.K_v)
        build_cache(config.params, settings, config.cache_dir, config.workers)
    data = config_record(config)
    R = config.replications
    results = []
    if config.workers > 1 and R > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            for done, result in enumerate(pool.map(_run_replication, [data] * R, range(R)), start=1):
                results.append(result)
                logger.info("replication %d/%d done", done, R)
    else:
        for r in range(R):
            results.append(_run_replication(data, r))
            logger.info("replication %d/%d done", r + 1, R)
    # 워커 수와 무관하게 같은 CSV가 나오도록 반복 번호 순으로 정렬합니다.
    results.sort(key=lambda item: item[0])

    rows = [row for _, replication_rows, _ in results for row in replication_rows]
    failures = [(r, message) for r, _, message in results if message is not None]
    # 실패한 반복은 기록만 하고 건너뜁니다.
    for r, message in failures:
        logger.warning("replication %d failed: %s", r, message)
    table = pd.DataFrame(rows, columns=CSV_COLUMNS)

    out_dir = Path(out_dir or config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / MC_CSV
    table.to_csv(csv_path, index=False)
    logger.info("wrote %s", csv_path)
    study = summarize_study(config, table, failures, csv_path.name)
    summary_path = _dump_json(study.to_dict(), out_dir / MC_SUMMARY)
    return csv_path, summary_path, study
