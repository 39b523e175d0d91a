# tools/simulation.py
# 필드를 시뮬레이션하고 replacement 분산 캐시를 만드는 MCP 도구들을 정의합니다.

from typing import Any, Dict, List, Optional

from core.config import config_from_data
from core.errors import SPDEError
from core.study import run_build_cache, run_simulate
from mcp_tools.spde_mcp_instance import mcp_instance as mcp  # 공유 인스턴스 사용
from tools.constants import error_result


@mcp.tool()
def spde_simulate(config: Optional[Dict[str, Any]] = None, overrides: Optional[List[str]] = None,
                  out_dir: Optional[str] = None) -> Dict[str, Any]:
    """
    Simulate one field (stream (seed, 0)) and write it with its metadata.

    Args:
        config: run configuration; the simulator section picks truncation or replacement
        overrides: dotted 'key=value' overrides, e.g. ["scheme.n=500"]
        out_dir: output directory (default: output_dir of the config)

    Returns:
        {"path": metadata JSON path}, or {"error", "exit_code"}.
    """
    try:
        run = config_from_data(config, overrides or ())
        return {"path": str(run_simulate(run, out_dir))}
    except SPDEError as e:
        return error_result(e)
    except OSError as e:
        return {"error": f"filesystem error: {e}", "exit_code": 1}


@mcp.tool()
def spde_build_cache(config: Optional[Dict[str, Any]] = None, overrides: Optional[List[str]] = None,
                     cache_dir: Optional[str] = None, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Build (or load) the replacement-variance cache of a grid configuration and persist it.

    Args:
        config: run configuration with a grid spatial scheme
        overrides: dotted 'key=value' overrides
        cache_dir: cache directory (default: SPDE_CACHE_DIR)
        workers: threads computing the variances

    Returns:
        digest, key, number of entries and the variance range, or {"error", "exit_code"}.
    """
    try:
        run = config_from_data(config, overrides or ())
        return run_build_cache(run, cache_dir=cache_dir, workers=workers)
    except SPDEError as e:
        return error_result(e)
    except OSError as e:
        return {"error": f"filesystem error: {e}", "exit_code": 1}
