# core/context.py
# 이 파일은 실행 설정값(급수 허용오차, 모드 예산, 캐시 디렉토리, 워커 수)의
# 기본값을 관리하는 유틸리티 함수들을 포함합니다. 데코레이터를 통해 함수 호출 시
# 빠졌거나 None인 값을 프로세스 기본값(환경변수 / .env)으로 채워 넣습니다.

import inspect  # 함수 시그니처를 검사하기 위해 사용합니다.
from functools import wraps  # 데코레이터 작성을 위해 사용합니다.
from typing import Any, Callable  # 타입 힌트를 위해 사용합니다.

from core.config import get_settings  # 캐싱된 환경 설정을 가져옵니다.

# 데코레이터가 채워 넣는 인자 이름들입니다.
RUN_DEFAULTS = ("series_tol", "budget", "cache_dir", "workers")


def get_run_default(name: str) -> Any:
    """
    실행 설정값 하나의 프로세스 기본값을 반환합니다.

    Args:
        name (str): series_tol, budget, cache_dir, workers 중 하나.

    Returns:
        Any: 환경 설정에서 읽은 값.
    """
    # 알 수 없는 이름은 KeyError로 거부합니다.
    if name not in RUN_DEFAULTS:
        raise KeyError(f"{name!r} is not a run default")
    return getattr(get_settings(), name)


def use_run_defaults(func: Callable) -> Callable:
    """
    RUN_DEFAULTS에 있는 키워드 인자 중 데코레이팅된 함수가 선언했지만
    호출 시 빠졌거나 None인 것을 프로세스 기본값으로 채우는 데코레이터입니다.

    Args:
        func (Callable): 데코레이팅할 함수.

    Returns:
        Callable: 기본값 자동 주입 기능이 추가된 함수.
    """
    # 시그니처는 데코레이팅 시점에 한 번만 검사합니다.
    sig = inspect.signature(func)
    wanted = [name for name in RUN_DEFAULTS if name in sig.parameters]

    @wraps(func)  # 원본 함수의 메타데이터(이름, 독스트링 등)를 유지합니다.
    def wrapper(*args, **kwargs):
        # 위치 인자로 넘어온 값도 이름으로 찾을 수 있게 바인딩합니다.
        bound = sig.bind_partial(*args, **kwargs)
        for name in wanted:
            # 값이 없거나 None이면 기본값을 사용합니다.
            if bound.arguments.get(name) is None:
                bound.arguments[name] = get_run_default(name)
        # 원래 함수를 채워진 인자들로 호출합니다.
        return func(*bound.args, **bound.kwargs)

    return wrapper
