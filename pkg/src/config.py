"""
설정값 로드 모듈

설정값은 다음 우선순위로 결정됩니다:
1. 명령행 인자 (--seed, --threads 등)
2. 환경변수 (SURVAUG_SEED, SURVAUG_THREADS, SURVAUG_ORACLE_CACHE, LOG_LEVEL)
3. 설정 파일 (KEY=value 형식, 시뮬레이션 전용)
4. 기본값
"""

import os
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional

import numpy as np
from dotenv import dotenv_values
from loguru import logger

from src.errors import ConfigError

DEFAULT_SEED = 12345
DEFAULT_THREADS = 1
DEFAULT_ORACLE_CACHE = ".cache/oracles"


def resolve_setting(
    cli_value: Any,
    env_key: Optional[str] = None,
    file_values: Optional[Mapping[str, Optional[str]]] = None,
    file_key: Optional[str] = None,
    default: Any = None,
    cast: Callable[[str], Any] = str,
) -> Any:
    """
    명령행 → 환경변수 → 설정 파일 → 기본값 순서로 설정값을 결정합니다.

    Args:
        cli_value: 명령행에서 받은 값 (None이면 다음 단계로)
        env_key: 환경변수 키
        file_values: 설정 파일에서 읽은 KEY=value 딕셔너리
        file_key: 설정 파일 키
        default: 기본값
        cast: 문자열 값을 변환할 함수

    Returns:
        결정된 설정값
    """
    if cli_value is not None:
        return cli_value

    if env_key:
        env_value = os.environ.get(env_key)
        if env_value:
            return _cast(cast, env_value, env_key)

    if file_values is not None and file_key:
        file_value = file_values.get(file_key)
        if file_value not in (None, ""):
            return _cast(cast, file_value, file_key)

    return default


def _cast(cast: Callable[[str], Any], raw: str, key: str) -> Any:
    try:
        return cast(raw)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"설정값 '{key}={raw}'을(를) 해석할 수 없습니다: {e}") from e


def get_seed(cli_value: Optional[int] = None) -> int:
    """기본 난수 시드를 반환합니다."""
    return resolve_setting(cli_value, "SURVAUG_SEED", default=DEFAULT_SEED, cast=int)


def get_threads(cli_value: Optional[int] = None) -> int:
    """병렬 작업 수를 반환합니다 (최소 1)."""
    threads = resolve_setting(cli_value, "SURVAUG_THREADS", default=DEFAULT_THREADS, cast=int)
    if threads < 1:
        raise ConfigError(f"threads는 1 이상이어야 합니다: {threads}")
    return threads


def get_oracle_cache_dir(cli_value: Optional[str] = None) -> Path:
    """참값 오라클 캐시 디렉터리를 반환합니다."""
    return Path(resolve_setting(cli_value, "SURVAUG_ORACLE_CACHE", default=DEFAULT_ORACLE_CACHE))


def load_key_value_file(path: str) -> Dict[str, Optional[str]]:
    """
    KEY=value 형식의 설정 파일을 읽습니다.

    Args:
        path: 설정 파일 경로

    Returns:
        키-값 딕셔너리 (키는 대문자로 정규화)
    """
    config_path = Path(path)
    if not config_path.is_file():
        raise ConfigError(f"설정 파일을 찾을 수 없습니다: {path}")

    values = dotenv_values(config_path)
    logger.info(f"설정 파일 로드: {path} (키 {len(values)}개)")
    return {key.strip().upper(): value for key, value in values.items()}


def split_list(raw: Optional[str]) -> List[str]:
    """쉼표로 구분된 문자열을 리스트로 변환합니다 (빈 항목 제거)."""
    if raw is None:
        return []
    return [item.strip() for item in str(raw).split(",") if item.strip()]


def derive_seed(*keys: int) -> int:
    """
    정수 키 조합에서 32비트 하위 시드를 파생합니다.

    같은 키 조합은 항상 같은 시드를 반환하므로 병렬 수와 실행 순서에
    관계없이 결과가 재현됩니다.
    """
    entropy = [int(key) for key in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])
