# mcp_tools/mcp_server_spde.py
# 상수, 시뮬레이션, 추정, 캐시 도구를 stdio로 제공하는 MCP 서버입니다.
# 직접 실행 (python mcp_tools/mcp_server_spde.py) 또는 `main.py serve` 로 실행합니다.

import asyncio  # list_tools 코루틴 실행
import importlib  # 모듈 동적 로드
import logging
import os
import sys

# 프로젝트 루트 경로 설정
project_root = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

from core.config import configure_logging
from mcp_tools.spde_mcp_instance import mcp_instance as mcp  # 공유 인스턴스 사용

logger = logging.getLogger("spde-vol.server")

# import 시 공유 인스턴스에 등록되는 모듈들
MODULES = [
    "resources.caches",
    "tools.constants",
    "tools.simulation",
    "tools.estimation",
]


def load_modules() -> list:
    """Import every tool and resource module; returns the names that failed."""
    failed = []
    for module_name in MODULES:
        try:
            importlib.import_module(module_name)  # import 시 @mcp.tool() 등록
            logger.debug("imported %s", module_name)
        except Exception as e:
            # 실패한 모듈만 빼고 서버는 계속 시작합니다.
            logger.exception("failed to import %s: %s", module_name, e)
            failed.append(module_name)
    return failed


async def registered_tool_names() -> list:
    # mcp.list_tools()는 코루틴이므로 await 사용
    tools = await mcp.list_tools()
    return sorted(getattr(tool, "name", str(tool)) for tool in tools)


def main() -> None:
    # stdout은 프로토콜 전용이므로 로그는 stderr로만 보냅니다.
    configure_logging()
    failed = load_modules()
    if failed:
        logger.warning("server starts without %s", ", ".join(failed))
    logger.info("registered tools: %s", asyncio.run(registered_tool_names()))
    logger.info("starting spde-vol MCP server on stdio (pid %s)", os.getpid())
    mcp.run(transport="stdio")


if __name__ == "__main__":
    main()
