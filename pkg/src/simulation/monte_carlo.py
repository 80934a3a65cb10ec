"""
Monte Carlo 평가 모듈

복제(replicate)마다 하위 시드로 임상시험을 생성하고 모든 추정량을 적용한 뒤,
추정량별 bias / SD / RE / CP를 집계합니다.
"""

from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.augmentation import DEFAULT_K_FOLDS, augment_cross_fit, augment_no_split, make_plan
from src.config import derive_seed
from src.errors import ESTIMATION_ERRORS, ConfigError
from src.learners import DEFAULT_CANDIDATES, LEARNER_KINDS, LearnerConfig
from src.simulation.oracle_cache import ORACLE_MEASURES, OracleValue, true_value
from src.simulation.scenarios import ScenarioSpec, generate_trial
from src.survival.measures import MEASURES_WITH_TAU, EffectMeasureSpec

UNADJUSTED = "unadjusted"
FAILURE_FLAG_RATE = 0.01


class EstimatorConfig(BaseModel):
    """시뮬레이션에서 비교할 증강 추정량 하나"""
    model_config = ConfigDict(frozen=True)

    learner: str
    split: bool = False
    k_folds: int = Field(default=DEFAULT_K_FOLDS, ge=2)
    candidates: Tuple[str, ...] = DEFAULT_CANDIDATES

    @field_validator("learner")
    @classmethod
    def _known_learner(cls, value: str) -> str:
        if value not in LEARNER_KINDS:
            raise ValueError(f"알 수 없는 학습기입니다: {value}")
        return value

    @property
    def estimator_id(self) -> str:
        return self.learner

    @property
    def split_label(self) -> str:
        return "split" if self.split else "no_split"

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(kind=self.learner, candidates=self.candidates)


@dataclass(frozen=True)
class SimMetrics:
    """추정량 하나의 Monte Carlo 요약"""
    measure: str
    estimator_id: str
    split: bool
    bias: float
    sd: float
    re: float
    cp: float
    n_reps: int
    n_failures: int
    mean_se: float = float("nan")

    @property
    def failure_rate(self) -> float:
        return self.n_failures / self.n_reps if self.n_reps else 0.0

    @property
    def flagged(self) -> bool:
        return self.failure_rate > FAILURE_FLAG_RATE


def _record(replicate: int, measure: str, estimator: str, split: bool, point=np.nan, se=np.nan,
            lower=np.nan, upper=np.nan, error: str = "") -> Dict:
    return {
        "replicate": replicate, "measure": measure, "estimator": estimator, "split": split,
        "point": point, "se": se, "lower": lower, "upper": upper, "error": error,
    }


def _measure_spec(measure: str, tau: float) -> EffectMeasureSpec:
    return EffectMeasureSpec(id=measure, tau=tau if measure in MEASURES_WITH_TAU else None)


def _run_replicate(spec: ScenarioSpec, measures: Sequence[str], configs: Sequence[EstimatorConfig],
                   replicate: int, seed_sequence: np.random.SeedSequence, ci_level: float) -> List[Dict]:
    """복제 하나: 데이터 생성 후 척도 × 추정량 조합을 모두 적용"""
    data_seed, estimator_seed = seed_sequence.spawn(2)
    learner_seed = int(estimator_seed.generate_state(1)[0])
    records: List[Dict] = []
    try:
        data = generate_trial(spec, data_seed)
    except ESTIMATION_ERRORS as e:
        for measure in measures:
            records.append(_record(replicate, measure, UNADJUSTED, False, error=str(e)))
            records.extend(_record(replicate, measure, c.estimator_id, c.split, error=str(e)) for c in configs)
        return records

    plans = {}
    for measure in measures:
        measure_spec = _measure_spec(measure, spec.tau)
        try:
            report = augment_no_split(data, measure_spec, "zero", rng_seed=learner_seed, ci_level=ci_level)
            row = report.unadjusted
            records.append(_record(replicate, measure, UNADJUSTED, False, row.point, row.se, *row.ci))
        except ESTIMATION_ERRORS as e:
            records.append(_record(replicate, measure, UNADJUSTED, False, error=str(e)))

        for index, config in enumerate(configs):
            seed = derive_seed(learner_seed, index)
            try:
                if config.split:
                    if config.k_folds not in plans:
                        plans[config.k_folds] = make_plan(
                            data.n, data.treatment, data.event, config.k_folds, derive_seed(learner_seed, 1000 + config.k_folds)
                        )
                    report = augment_cross_fit(data, measure_spec, config.learner_config(), plans[config.k_folds], ci_level=ci_level)
                else:
                    report = augment_no_split(data, measure_spec, config.learner_config(), rng_seed=seed, ci_level=ci_level)
                row = report.augmented
                records.append(_record(replicate, measure, config.estimator_id, config.split, row.point, row.se, *row.ci))
            except ESTIMATION_ERRORS as e:
                records.append(_record(replicate, measure, config.estimator_id, config.split, error=str(e)))
    return records


def summarize(replicates: pd.DataFrame, truths: Dict[str, float], n_reps: int) -> List[SimMetrics]:
    """
    복제 기록을 추정량별 지표로 집계합니다.

    RE는 같은 척도의 비보정 추정량 분산 대비 비율이며, 실패한 복제는
    해당 추정량에서만 제외하고 n_failures로 셉니다.
    """
    metrics: List[SimMetrics] = []
    for measure, by_measure in replicates.groupby("measure", sort=False):
        truth = truths[measure]
        baseline = by_measure[(by_measure["estimator"] == UNADJUSTED) & (by_measure["error"] == "")]
        unadjusted_var = float(np.var(baseline["point"].to_numpy(), ddof=1)) if len(baseline) > 1 else np.nan

        for (estimator, split), group in by_measure.groupby(["estimator", "split"], sort=False):
            ok = group[group["error"] == ""]
            points = ok["point"].to_numpy(dtype=float)
            n_failures = int(len(group) - len(ok))
            if len(ok) > 1:
                variance = float(np.var(points, ddof=1))
                sd = float(np.sqrt(variance))
                re = unadjusted_var / variance if variance > 0 else np.nan
                covered = (ok["lower"].to_numpy() <= truth) & (truth <= ok["upper"].to_numpy())
                bias, cp, mean_se = float(points.mean() - truth), float(covered.mean()), float(ok["se"].mean())
            else:
                bias = sd = re = cp = mean_se = np.nan
            item = SimMetrics(
                measure=measure, estimator_id=estimator, split=bool(split), bias=bias, sd=sd, re=re,
                cp=cp, n_reps=n_reps, n_failures=n_failures, mean_se=mean_se,
            )
            if item.flagged:
                logger.warning(
                    f"⚠️ 실패율이 1%를 넘었습니다: measure={measure}, estimator={estimator}, "
                    f"split={bool(split)}, failures={n_failures}/{n_reps}"
                )
            metrics.append(item)
    return metrics


def run_monte_carlo(
    spec: ScenarioSpec,
    measures: Sequence[str],
    estimator_configs: Sequence[EstimatorConfig],
    n_reps: int,
    master_seed: int,
    parallelism: int = 1,
    truths: Optional[Dict[str, OracleValue]] = None,
    ci_level: float = 0.95,
) -> Tuple[List[SimMetrics], pd.DataFrame]:
    """
    시나리오 한 칸의 Monte Carlo 평가

    Args:
        spec: 시나리오 설정
        measures: 효과 척도 id 목록 (log_hr, surv_diff, rmst_diff)
        estimator_configs: 증강 추정량 설정 목록 (비보정 추정량은 항상 포함)
        n_reps: 복제 수 (2 이상)
        master_seed: 주 시드
        parallelism: 복제 병렬 수 (결과는 병렬 수와 무관)
        truths: 척도별 참값 (없으면 오라클 캐시에서 계산)
        ci_level: 신뢰수준

    Returns:
        (SimMetrics 목록, 복제 기록 DataFrame)
    """
    if n_reps < 2:
        raise ConfigError(f"n_reps는 2 이상이어야 합니다: {n_reps}")
    unknown = [m for m in measures if m not in ORACLE_MEASURES]
    if not measures or unknown:
        raise ConfigError(f"시뮬레이션 척도 목록이 올바르지 않습니다: {list(measures)}")

    truths = truths or {measure: true_value(spec, measure, seed=master_seed) for measure in measures}
    children = np.random.SeedSequence(master_seed).spawn(n_reps)

    logger.info(f"Monte Carlo 시작: {spec.label}, reps={n_reps}, estimators={len(estimator_configs) + 1}, jobs={parallelism}")
    batches = Parallel(n_jobs=parallelism)(
        delayed(_run_replicate)(spec, list(measures), list(estimator_configs), r, children[r], ci_level)
        for r in range(n_reps)
    )
    replicates = pd.DataFrame([record for batch in batches for record in batch])
    metrics = summarize(replicates, {m: truths[m].value for m in measures}, n_reps)
    logger.info(f"Monte Carlo 완료: {spec.label}")
    return metrics, replicates
