# tools/estimation.py
# 저장된 필드에서 추정하고 Monte Carlo 실험을 실행하는 MCP 도구들을 정의합니다.

import json
from typing import Any, Dict, List, Optional

from core.config import config_from_data
from core.errors import SPDEError
from core.study import run_estimate, run_mc
from mcp_tools.spde_mcp_instance import mcp_instance as mcp  # 공유 인스턴스 사용
from tools.constants import error_result


@mcp.tool()
def spde_estimate(sample: str, config: Optional[Dict[str, Any]] = None,
                  overrides: Optional[List[str]] = None, out_dir: Optional[str] = None) -> Dict[str, Any]:
    """
    Run the configured estimators on a field written by spde_simulate.

    Args:
        sample: path of the field metadata JSON
        config: run configuration (estimation section and the known parameters)
        overrides: dotted 'key=value' overrides, e.g. ["estimation.estimators=[\"sigma\", \"alpha\"]"]
        out_dir: output directory (default: output_dir of the config)

    Returns:
        {"path", "reports"} with the written estimates, or {"error", "exit_code"}.
    """
    try:
        run = config_from_data(config, overrides or ())
        path = run_estimate(run, sample, out_dir)
        with open(path, "r") as f:
            written = json.load(f)
        return {"path": str(path), "reports": written["reports"], "scheme": written["scheme"]}
    except SPDEError as e:
        return error_result(e)
    except OSError as e:
        return {"error": f"filesystem error: {e}", "exit_code": 1}


@mcp.tool()
def spde_monte_carlo(config: Optional[Dict[str, Any]] = None, overrides: Optional[List[str]] = None,
                     out_dir: Optional[str] = None, workers: Optional[int] = None) -> Dict[str, Any]:
    """
    Run a Monte Carlo study: replication r simulates with stream (seed, r) and estimates.

    Args:
        config: run configuration; replications sets R
        overrides: dotted 'key=value' overrides, e.g. ["replications=100"]
        out_dir: output directory (default: output_dir of the config)
        workers: parallel replications

    Returns:
        CSV and summary paths plus the summary, or {"error", "exit_code"}.
    """
    try:
        run = config_from_data(config, overrides or ())
        # 인자로 받은 workers가 설정 파일 값보다 우선합니다.
        if workers is not None:
            run = run.model_copy(update={"workers": workers})
        csv_path, summary_path, study = run_mc(run, out_dir)
        return {"csv": str(csv_path), "summary_path": str(summary_path), "summary": study.to_dict()}
    except SPDEError as e:
        return error_result(e)
    except OSError as e:
        return {"error": f"filesystem error: {e}", "exit_code": 1}
