# tools/constants.py
# 모델의 닫힌 형태 값(재스케일 상수 K, Upsilon, Lambda, 증분 모멘트,
# 추정량의 점근 분산)을 조회하는 MCP 도구들을 정의합니다.

from typing import Any, Dict, List, Optional

from core.config import config_from_data  # dict 설정 검증
from core.context import use_run_defaults  # series_tol 기본값 주입
from core.errors import SPDEError
from core.study import compute_constants, theoretical_values
from mcp_tools.spde_mcp_instance import mcp_instance as mcp  # 공유 인스턴스 사용


# 도구는 예외 대신 error / exit_code dict를 반환합니다.
def error_result(e: SPDEError) -> Dict[str, Any]:
    return {"error": f"{type(e).__name__}: {e}", "exit_code": e.exit_code}


@mcp.tool()
@use_run_defaults
def spde_constants(config: Optional[Dict[str, Any]] = None, overrides: Optional[List[str]] = None,
                   y: Optional[List[float]] = None, series_tol: Optional[float] = None) -> Dict[str, Any]:
    """
    Closed-form constants of the model described by a run configuration.

    Args:
        config: run configuration (model, scheme, ...); defaults when omitted
        overrides: dotted 'key=value' overrides, e.g. ["model.alpha_prime=0.4"]
        y: spatial point of the moment formulas (default: the centre of the cube)
        series_tol: tail tolerance of the Upsilon and Lambda series

    Returns:
        K, K at eta = 1, Upsilon, Lambda, lag-1 autocorrelation and the limit
        increment moments at y, or {"error", "exit_code"}.
    """
    try:
        run = config_from_data(config, overrides or ())
        tol = run.series_tol or series_tol  # 설정 파일 값이 우선
        return compute_constants(run.params, tol, y, run.scheme.n)
    except SPDEError as e:
        return error_result(e)


@mcp.tool()
@use_run_defaults
def spde_asymptotic_variances(config: Optional[Dict[str, Any]] = None, overrides: Optional[List[str]] = None,
                              series_tol: Optional[float] = None) -> Dict[str, Any]:
    """
    True values and asymptotic variances of every estimator component for the
    sampling scheme of a run configuration.

    Args:
        config: run configuration; defaults when omitted
        overrides: dotted 'key=value' overrides
        series_tol: tail tolerance of the Upsilon and Lambda series

    Returns:
        {"estimator/component": {"truth", "variance"}}, or {"error", "exit_code"}.
    """
    try:
        run = config_from_data(config, overrides or ())
        if run.series_tol is None:
            run = run.model_copy(update={"series_tol": series_tol})
        return {
            f"{estimator}/{component}": {"truth": truth, "variance": variance}
            for (estimator, component), (truth, variance) in theoretical_values(run).items()
        }
    except SPDEError as e:
        return error_result(e)
