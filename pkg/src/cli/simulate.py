"""
simulate 명령

KEY=value 설정 파일로 시나리오 격자를 정의하고, 칸마다 Monte Carlo 평가를 돌려
results.csv / table.txt / replicates.csv / oracles.csv를 저장합니다.

설정 키:
    SCENARIOS=A,B,C,D         GAMMAS=0.5        PIS=0.5,0.6667
    SAMPLE_SIZES=100,250      MEASURES=log_hr,surv_diff,rmst_diff
    ESTIMATORS=linear,forest:split,super:both
    REPS=2000  SEED=12345  THREADS=4  OUTPUT_DIR=results/table1
    TAU=2  K_FOLDS=5  ORACLE_N=1000000  ORACLE_DRAWS=10000000  ORACLE_SEED=2024  CI_LEVEL=0.95
"""

import itertools
import time
from pathlib import Path
from typing import Dict, List, Optional

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from src.cli.ingest import learner_kind
from src.config import get_seed, get_threads, load_key_value_file, resolve_setting, split_list
from src.errors import ConfigError
from src.simulation.monte_carlo import EstimatorConfig, run_monte_carlo
from src.simulation.oracle_cache import (
    DEFAULT_ORACLE_DRAWS,
    DEFAULT_ORACLE_N,
    ORACLE_MEASURES,
    OracleCache,
    get_oracle_cache,
    true_value,
)
from src.simulation.report import CellResult, render_table, write_outputs
from src.simulation.scenarios import SCENARIOS, ScenarioSpec

SPLIT_MODES = {"nosplit": (False,), "no_split": (False,), "split": (True,), "both": (False, True)}


def parse_estimators(raw: List[str], k_folds: int) -> List[EstimatorConfig]:
    """
    'learner[:split|nosplit|both]' 목록을 EstimatorConfig로 변환합니다.

    모드를 생략하면 nosplit입니다.
    """
    configs: List[EstimatorConfig] = []
    for token in raw:
        name, _, mode = token.partition(":")
        mode = (mode or "nosplit").strip().lower().replace("-", "_")
        if mode not in SPLIT_MODES:
            raise ValueError(f"알 수 없는 분할 모드입니다: {token} (허용: {', '.join(SPLIT_MODES)})")
        for split in SPLIT_MODES[mode]:
            configs.append(EstimatorConfig(learner=learner_kind(name), split=split, k_folds=k_folds))
    return configs


class SimulationConfig(BaseModel):
    """simulate 명령 설정 (격자 전체)"""
    model_config = ConfigDict(frozen=True)

    scenarios: List[str] = Field(min_length=1)
    gammas: List[float] = Field(min_length=1)
    pis: List[float] = Field(min_length=1)
    sample_sizes: List[int] = Field(min_length=1)
    measures: List[str] = Field(min_length=1)
    estimators: List[EstimatorConfig] = Field(default_factory=list)
    reps: int = Field(default=2000, ge=2)
    seed: int = Field(default=12345, ge=0)
    threads: int = Field(default=1, ge=1)
    output_dir: Path = Path("results")
    tau: float = Field(default=2.0, gt=0.0)
    k_folds: int = Field(default=5, ge=2)
    oracle_n: int = Field(default=DEFAULT_ORACLE_N, ge=1000)
    oracle_draws: int = Field(default=DEFAULT_ORACLE_DRAWS, ge=1000)
    oracle_seed: int = Field(default=2024, ge=0)
    ci_level: float = Field(default=0.95, gt=0.0, lt=1.0)

    @field_validator("scenarios")
    @classmethod
    def _known_scenarios(cls, values: List[str]) -> List[str]:
        values = [v.strip().upper() for v in values]
        unknown = [v for v in values if v not in SCENARIOS]
        if unknown:
            raise ValueError(f"알 수 없는 시나리오입니다: {unknown}")
        return values

    @field_validator("gammas")
    @classmethod
    def _non_negative(cls, values: List[float]) -> List[float]:
        if any(v < 0 for v in values):
            raise ValueError("gamma는 0 이상이어야 합니다")
        return values

    @field_validator("pis")
    @classmethod
    def _probabilities(cls, values: List[float]) -> List[float]:
        if any(not 0.0 < v < 1.0 for v in values):
            raise ValueError("pi는 (0, 1) 범위여야 합니다")
        return values

    @field_validator("measures")
    @classmethod
    def _known_measures(cls, values: List[str]) -> List[str]:
        values = [v.strip().lower().replace("-", "_") for v in values]
        unknown = [v for v in values if v not in ORACLE_MEASURES]
        if unknown:
            raise ValueError(f"시뮬레이션에서 지원하지 않는 척도입니다: {unknown} (허용: {', '.join(ORACLE_MEASURES)})")
        return values

    def cells(self) -> List[ScenarioSpec]:
        return [
            ScenarioSpec(scenario=s, gamma=g, pi=p, n=n, tau=self.tau)
            for s, g, p, n in itertools.product(self.scenarios, self.gammas, self.pis, self.sample_sizes)
        ]

    @classmethod
    def from_file(cls, path: str, threads: Optional[int] = None, seed: Optional[int] = None,
                  output_dir: Optional[str] = None) -> "SimulationConfig":
        """
        설정 파일을 읽어 검증합니다. 명령행 값과 환경변수가 파일 값보다 우선합니다.

        Raises:
            ConfigError: 파일이 없거나 격자 값이 올바르지 않은 경우
        """
        values = load_key_value_file(path)
        try:
            k_folds = resolve_setting(None, file_values=values, file_key="K_FOLDS", default=5, cast=int)
            fields = {
                "scenarios": split_list(values.get("SCENARIOS")),
                "gammas": [float(v) for v in split_list(values.get("GAMMAS"))],
                "pis": [float(v) for v in split_list(values.get("PIS"))],
                "sample_sizes": [int(v) for v in split_list(values.get("SAMPLE_SIZES"))],
                "measures": split_list(values.get("MEASURES")),
                "estimators": parse_estimators(split_list(values.get("ESTIMATORS")), k_folds),
                "reps": resolve_setting(None, file_values=values, file_key="REPS", default=2000, cast=int),
                "seed": resolve_setting(seed, "SURVAUG_SEED", values, "SEED", default=get_seed(), cast=int),
                "threads": resolve_setting(threads, "SURVAUG_THREADS", values, "THREADS", default=get_threads(), cast=int),
                "output_dir": resolve_setting(output_dir, file_values=values, file_key="OUTPUT_DIR", default="results"),
                "tau": resolve_setting(None, file_values=values, file_key="TAU", default=2.0, cast=float),
                "k_folds": k_folds,
                "oracle_n": resolve_setting(None, file_values=values, file_key="ORACLE_N", default=DEFAULT_ORACLE_N, cast=int),
                "oracle_draws": resolve_setting(None, file_values=values, file_key="ORACLE_DRAWS", default=DEFAULT_ORACLE_DRAWS, cast=int),
                "oracle_seed": resolve_setting(None, file_values=values, file_key="ORACLE_SEED", default=2024, cast=int),
                "ci_level": resolve_setting(None, file_values=values, file_key="CI_LEVEL", default=0.95, cast=float),
            }
            config = cls(**fields)
            config.cells()
            return config
        except ValidationError as e:
            raise ConfigError(f"시뮬레이션 설정이 올바르지 않습니다 ({path}):\n{e}") from e
        except ValueError as e:
            raise ConfigError(f"시뮬레이션 설정을 해석할 수 없습니다 ({path}): {e}") from e


def run_simulation(config: SimulationConfig, cache: Optional[OracleCache] = None) -> Dict[str, Path]:
    """
    격자의 모든 칸을 실행하고 결과 파일을 저장합니다.

    Returns:
        파일 종류별 경로
    """
    cache = cache or get_oracle_cache()
    cells: List[CellResult] = []
    grid = config.cells()
    for index, spec in enumerate(grid, start=1):
        started = time.time()
        truths = {
            measure: true_value(spec, measure, seed=config.oracle_seed, oracle_n=config.oracle_n,
                                oracle_draws=config.oracle_draws, cache=cache)
            for measure in config.measures
        }
        metrics, replicates = run_monte_carlo(
            spec, config.measures, config.estimators, config.reps, config.seed,
            parallelism=config.threads, truths=truths, ci_level=config.ci_level,
        )
        cells.append(CellResult(spec=spec, metrics=metrics, truths=truths, replicates=replicates))
        flagged = sum(m.flagged for m in metrics)
        logger.info(
            f"[{index}/{len(grid)}] 칸 완료: {spec.label}, elapsed={time.time() - started:.1f}s"
            + (f", 실패율 경고 {flagged}건" if flagged else "")
        )

    paths = write_outputs(cells, config.output_dir)
    print(render_table(cells))
    return paths


def simulate(config_path: str, threads: Optional[int] = None, seed: Optional[int] = None,
             output_dir: Optional[str] = None) -> Dict[str, Path]:
    """simulate 명령 본체: 설정 검증 후 실행 (계산 전에 설정 오류를 보고)"""
    config = SimulationConfig.from_file(config_path, threads=threads, seed=seed, output_dir=output_dir)
    logger.info(
        f"시뮬레이션 시작: cells={len(config.cells())}, measures={config.measures}, "
        f"estimators={[f'{e.learner}:{e.split_label}' for e in config.estimators]}, reps={config.reps}"
    )
    return run_simulation(config)
