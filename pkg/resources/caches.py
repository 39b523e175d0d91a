# resources/caches.py
# 이 파일은 캐시 디렉토리에 저장된 replacement 분산 캐시 목록을
# 조회하는 MCP 리소스를 정의합니다.

from dataclasses import asdict  # CacheInfo를 dict로 변환하기 위해 사용합니다.

from core.config import get_settings  # 캐시 디렉토리 기본값(SPDE_CACHE_DIR)을 가져옵니다.
from core.simulate import list_caches  # 캐시 파일을 읽어 CacheInfo 목록을 만듭니다.
from mcp_tools.spde_mcp_instance import mcp_instance as mcp  # 공유 인스턴스 사용


@mcp.resource(uri="spde://replacement-caches", name="Replacement Caches",
              description="Lists the persisted replacement-variance caches with their keys.")
def list_replacement_caches():
    """
    설정된 캐시 디렉토리(SPDE_CACHE_DIR)의 모든 캐시 파일을 읽어
    dict 리스트 형태로 반환합니다.

    Returns:
        List[dict]: path, digest, M, L, K_v, d, alpha_prime, entries 및
                    현재 프로세스에 로드되어 있는지 여부.
                    읽을 수 없는 파일은 건너뜁니다.
    """
    # 각 캐시 정보를 dict로 변환하여 리스트를 생성합니다.
    return [asdict(info) for info in list_caches(get_settings().cache_dir)]
