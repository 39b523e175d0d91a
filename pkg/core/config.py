# core/config.py
# 이 파일은 실행 설정(JSON 파일 + 점 표기 --set 오버라이드)을 로드하고,
# 환경변수(.env 지원)에서 프로세스 기본값을 읽고, 로깅을 설정하는
# 유틸리티 함수들을 포함합니다. 기본값은 env 파일마다 한 번만 읽어 캐싱합니다.

import json  # 설정 파일과 오버라이드 값 파싱을 위해 사용합니다.
import logging
import os  # 환경변수 조회를 위해 사용합니다.
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Iterable, Optional, Union  # 타입 힌트를 위해 사용합니다.

from dotenv import load_dotenv  # .env 파일을 환경변수로 로드합니다.
from pydantic import ValidationError  # RunConfig 검증 실패를 ConfigError로 바꿉니다.

from core.errors import ConfigError
from models.config import RunConfig

LOG_FORMAT = "[%(name)s] %(levelname)s %(message)s"

DEFAULT_CACHE_DIR = ".spde_cache"
DEFAULT_WORKERS = 1
DEFAULT_SERIES_TOL = 1e-10
DEFAULT_BUDGET = 1e8
DEFAULT_LOG_LEVEL = "WARNING"


@dataclass(frozen=True)
class Settings:
    """
    Process defaults for the knobs a RunConfig may leave unset.

    Attributes:
        cache_dir: directory of replacement caches (SPDE_CACHE_DIR)
        workers: parallel replications / cache workers (SPDE_WORKERS)
        series_tol: tail tolerance of the Upsilon and Lambda series (SPDE_SERIES_TOL)
        budget: maximal mode x step work of one simulation (SPDE_BUDGET)
        log_level: logging level name (SPDE_LOG_LEVEL)
    """
    cache_dir: str = DEFAULT_CACHE_DIR
    workers: int = DEFAULT_WORKERS
    series_tol: float = DEFAULT_SERIES_TOL
    budget: float = DEFAULT_BUDGET
    log_level: str = DEFAULT_LOG_LEVEL


# 기본값을 캐싱하기 위한 딕셔너리입니다.
# env 파일 경로를 키로 사용하며, None은 기본 .env 탐색을 뜻합니다.
_settings_cache: Dict[Optional[str], Settings] = {}


def _env(name: str, cast, default):
    raw = os.getenv(name)
    if raw is None or raw == "":
        return default
    try:
        return cast(raw)
    except ValueError as e:
        raise ConfigError(f"environment variable {name}={raw!r} is invalid: {e}") from e


def get_settings(env_file: Optional[str] = None) -> Settings:
    """
    Defaults from the environment after loading the .env file.

    Args:
        env_file: explicit .env path; None searches the usual locations.

    Returns:
        Settings, cached per env file.
    """
    # 캐시에 해당 env 파일의 설정이 없는 경우 새로 읽습니다.
    if env_file not in _settings_cache:
        load_dotenv(env_file)
        settings = Settings(
            cache_dir=_env("SPDE_CACHE_DIR", str, DEFAULT_CACHE_DIR),
            workers=_env("SPDE_WORKERS", int, DEFAULT_WORKERS),
            series_tol=_env("SPDE_SERIES_TOL", float, DEFAULT_SERIES_TOL),
            budget=_env("SPDE_BUDGET", float, DEFAULT_BUDGET),
            log_level=_env("SPDE_LOG_LEVEL", str, DEFAULT_LOG_LEVEL).upper(),
        )
        # 범위를 벗어난 값은 설정 오류입니다.
        if settings.workers < 1 or settings.series_tol <= 0 or settings.budget <= 0:
            raise ConfigError(f"environment defaults out of range: {settings}")
        _settings_cache[env_file] = settings
    # 캐시된 (또는 새로 읽은) 설정을 반환합니다.
    return _settings_cache[env_file]


def clear_settings_cache() -> None:
    _settings_cache.clear()


def configure_logging(level: Optional[str] = None) -> None:
    """Install the package log handler once; the level comes from the argument or SPDE_LOG_LEVEL."""
    name = (level or get_settings().log_level).upper()
    if name not in logging.getLevelNamesMapping():
        raise ConfigError(f"unknown log level {name!r}")
    root = logging.getLogger()
    # 핸들러는 한 번만 추가합니다.
    if not any(getattr(h, "_spde", False) for h in root.handlers):
        handler = logging.StreamHandler()
        handler.setFormatter(logging.Formatter(LOG_FORMAT))
        handler._spde = True
        root.addHandler(handler)
    root.setLevel(name)


def parse_override(item: str) -> tuple:
    """Split 'a.b.c=value' into (['a', 'b', 'c'], value); the value is JSON or a plain string."""
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like key.path=value")
    path, raw = item.split("=", 1)
    keys = [k for k in path.strip().split(".") if k]
    if not keys:
        raise ConfigError(f"override {item!r} has an empty key")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        # JSON이 아니면 문자열 그대로 사용합니다. (예: name=S3)
        value = raw
    return keys, value


def apply_overrides(data: Dict[str, Any], overrides: Iterable[str]) -> Dict[str, Any]:
    """Set every dotted override in a nested dictionary (sections are created when missing)."""
    for item in overrides:
        keys, value = parse_override(item)
        node = data
        for key in keys[:-1]:
            child = node.setdefault(key, {})
            if not isinstance(child, dict):
                raise ConfigError(f"override {item!r}: {key!r} is not a section")
            node = child
        node[keys[-1]] = value
    return data


def load_run_config(path: Optional[Union[str, Path]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """
    Read a JSON run configuration, apply overrides and validate it.

    Args:
        path: JSON file; None starts from the defaults
        overrides: 'key.path=value' strings, applied in order

    Raises:
        ConfigError: unreadable file, malformed JSON, bad override or failed validation.
    """
    data: Dict[str, Any] = {}
    if path is not None:
        try:
            with open(path, "r") as f:
                data = json.load(f)
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        except json.JSONDecodeError as e:
            raise ConfigError(f"config {path} is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
    apply_overrides(data, overrides)
    return validate_run_config(data)


def validate_run_config(data: Dict[str, Any]) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid run configuration:\n{e}") from e


def config_from_data(data: Optional[Dict[str, Any]] = None, overrides: Iterable[str] = ()) -> RunConfig:
    """Validate a run configuration given as a dictionary (as the MCP tools receive it)."""
    if data is not None and not isinstance(data, dict):
        raise ConfigError("the run configuration must be a JSON object")
    # 입력 dict를 건드리지 않도록 깊은 복사 후 오버라이드를 적용합니다.
    return validate_run_config(apply_overrides(json.loads(json.dumps(data or {})), overrides))
