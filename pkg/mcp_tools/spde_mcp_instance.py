# mcp_tools/spde_mcp_instance.py
# 공유 FastMCP 인스턴스를 생성합니다.
# tool / resource 모듈은 import 시점에 이 인스턴스에 등록됩니다.

import logging

from mcp.server.fastmcp import FastMCP

logger = logging.getLogger(__name__)

# 모든 모듈이 같은 인스턴스를 사용해야 등록된 도구가 서버에 보입니다.
mcp_instance = FastMCP("spde-vol")
logger.debug("shared MCP instance created with ID %s", id(mcp_instance))
