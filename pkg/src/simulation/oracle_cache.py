"""
참값(true value) 오라클 및 캐시 모듈

γ=0이면 모든 척도의 참값은 0입니다. γ>0이면
- log_hr: n=10⁶ 대형 시험 하나에 비보정 Cox 적합
- surv_diff / rmst_diff: 군별 10⁷개 무중도절단 사건시간의 Monte Carlo 적분
으로 근사하고, Monte Carlo 표준오차와 함께 디스크(JSON)와 메모리(LRU)에 캐시합니다.
"""

import json
import time
from collections import OrderedDict
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional

import numpy as np
from loguru import logger

from src.config import derive_seed, get_oracle_cache_dir
from src.errors import MeasureError
from src.simulation.scenarios import N_COVARIATES, ScenarioSpec, draw_event_times, generate_trial
from src.survival.core import cox_unadjusted

DEFAULT_ORACLE_N = 1_000_000
DEFAULT_ORACLE_DRAWS = 10_000_000
ORACLE_CHUNK = 1_000_000
ORACLE_MEASURES = ("log_hr", "surv_diff", "rmst_diff")


@dataclass(frozen=True)
class OracleValue:
    """참값 근사치와 그 Monte Carlo 표준오차"""
    scenario: str
    gamma: float
    pi: float
    measure: str
    tau: Optional[float]
    seed: int
    value: float
    mc_se: float
    method: str
    created_at: float = field(default_factory=time.time)


def oracle_key(spec: ScenarioSpec, measure: str, seed: int) -> str:
    tau = f"{spec.tau:g}" if measure != "log_hr" else "-"
    return f"{spec.scenario}_g{spec.gamma:g}_pi{spec.pi:.6g}_{measure}_tau{tau}_seed{seed}"


def _marginal_functional(spec: ScenarioSpec, arm: int, measure: str, draws: int,
                         rng: np.random.Generator) -> tuple:
    """군별 E[g(T)]의 Monte Carlo 평균과 분산 (청크 단위)"""
    total = 0.0
    total_sq = 0.0
    remaining = draws
    while remaining > 0:
        size = min(ORACLE_CHUNK, remaining)
        covariates = rng.standard_normal((size, N_COVARIATES))
        event_time = draw_event_times(rng, spec.scenario, spec.gamma, covariates, arm)
        values = (event_time > spec.tau).astype(float) if measure == "surv_diff" else np.minimum(event_time, spec.tau)
        total += float(values.sum())
        total_sq += float((values ** 2).sum())
        remaining -= size
    mean = total / draws
    return mean, max(total_sq / draws - mean ** 2, 0.0)


def compute_true_value(spec: ScenarioSpec, measure: str, seed: int,
                       oracle_n: int = DEFAULT_ORACLE_N,
                       oracle_draws: int = DEFAULT_ORACLE_DRAWS) -> OracleValue:
    """
    캐시 없이 참값을 계산합니다.

    Args:
        spec: 시나리오 설정 (scenario, gamma, pi, tau 사용)
        measure: log_hr, surv_diff, rmst_diff
        seed: 오라클 시드
        oracle_n: log_hr 대형 시험 크기
        oracle_draws: surv/rmst 군별 Monte Carlo 표본 수
    """
    if measure not in ORACLE_MEASURES:
        raise MeasureError(f"시뮬레이션 참값을 지원하지 않는 척도입니다: {measure}")
    base = dict(scenario=spec.scenario, gamma=spec.gamma, pi=spec.pi, measure=measure,
                tau=None if measure == "log_hr" else spec.tau, seed=seed)

    if spec.gamma == 0:
        return OracleValue(**base, value=0.0, mc_se=0.0, method="null")

    started = time.time()
    if measure == "log_hr":
        fit = cox_unadjusted(generate_trial(spec, derive_seed(seed, 1), n=oracle_n))
        result = OracleValue(**base, value=fit.log_hr, mc_se=float(np.sqrt(fit.robust_variance)),
                             method=f"cox n={oracle_n}")
    else:
        rng = np.random.default_rng(derive_seed(seed, 2))
        mean1, var1 = _marginal_functional(spec, 1, measure, oracle_draws, rng)
        mean0, var0 = _marginal_functional(spec, 0, measure, oracle_draws, rng)
        result = OracleValue(**base, value=mean1 - mean0,
                             mc_se=float(np.sqrt(var1 / oracle_draws + var0 / oracle_draws)),
                             method=f"monte carlo draws={oracle_draws}")
    logger.info(
        f"참값 계산 완료: {spec.scenario}/{measure}, value={result.value:.5f}, "
        f"mc_se={result.mc_se:.2e}, elapsed={time.time() - started:.1f}s"
    )
    return result


class OracleCache:
    """참값 캐시 (메모리 LRU + 디스크 JSON)"""

    def __init__(self, cache_dir: Optional[Path] = None, max_entries: int = 256):
        """
        Args:
            cache_dir: JSON 파일 저장 디렉터리 (None이면 디스크 캐시 미사용)
            max_entries: 메모리에 보관할 최대 항목 수
        """
        self._entries: "OrderedDict[str, OracleValue]" = OrderedDict()
        self._max_entries = max_entries
        self._cache_dir = Path(cache_dir) if cache_dir is not None else None

    def _path(self, key: str) -> Optional[Path]:
        return self._cache_dir / f"{key}.json" if self._cache_dir is not None else None

    def _remember(self, key: str, value: OracleValue):
        self._entries[key] = value
        self._entries.move_to_end(key)
        # 용량 초과 시 가장 오래된 항목 삭제
        while len(self._entries) > self._max_entries:
            self._entries.popitem(last=False)

    def get(self, key: str) -> Optional[OracleValue]:
        """캐시된 참값 조회 (없으면 None)"""
        if key in self._entries:
            self._entries.move_to_end(key)
            return self._entries[key]

        path = self._path(key)
        if path is None or not path.is_file():
            return None
        try:
            value = OracleValue(**json.loads(path.read_text(encoding="utf-8")))
        except (json.JSONDecodeError, TypeError) as e:
            logger.warning(f"손상된 참값 캐시 파일을 무시합니다: {path}: {e}")
            return None
        self._remember(key, value)
        return value

    def put(self, key: str, value: OracleValue):
        self._remember(key, value)
        path = self._path(key)
        if path is not None:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(json.dumps(asdict(value), indent=2), encoding="utf-8")

    def get_or_compute(self, key: str, compute: Callable[[], OracleValue]) -> OracleValue:
        cached = self.get(key)
        if cached is not None:
            logger.debug(f"참값 캐시 적중: {key}")
            return cached
        value = compute()
        self.put(key, value)
        return value

    def values(self) -> List[OracleValue]:
        return list(self._entries.values())

    def clear_all(self):
        """메모리 캐시 비우기 (디스크 파일은 유지)"""
        self._entries.clear()

    @property
    def count(self) -> int:
        return len(self._entries)


# 전역 참값 캐시
_oracle_cache: Optional[OracleCache] = None


def get_oracle_cache() -> OracleCache:
    """참값 캐시 싱글톤 인스턴스 (SURVAUG_ORACLE_CACHE 디렉터리 사용)"""
    global _oracle_cache
    if _oracle_cache is None:
        _oracle_cache = OracleCache(get_oracle_cache_dir())
    return _oracle_cache


def true_value(spec: ScenarioSpec, measure: str, seed: int = 0,
               oracle_n: int = DEFAULT_ORACLE_N, oracle_draws: int = DEFAULT_ORACLE_DRAWS,
               cache: Optional[OracleCache] = None) -> OracleValue:
    """
    캐시를 거쳐 참값을 반환합니다.

    Returns:
        OracleValue (γ=0이면 value=0.0)
    """
    cache = cache or get_oracle_cache()
    key = oracle_key(spec, measure, seed)
    if spec.gamma > 0:
        key = f"{key}_n{oracle_n}_d{oracle_draws}"
    return cache.get_or_compute(key, lambda: compute_true_value(spec, measure, seed, oracle_n, oracle_draws))
