"""
CSV 수집 모듈

분석 설정(AnalysisConfig)을 검증하고 CSV 파일을 TrialDataset으로 변환합니다.
범주형 공변량은 알파벳순 첫 수준을 기준으로 지시변수 열로 펼치고,
결측값은 missing_policy에 따라 실패하거나 대체합니다.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Literal, Optional, Tuple

import numpy as np
import pandas as pd
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.errors import IngestError
from src.learners import DEFAULT_CANDIDATES, LearnerConfig
from src.survival.dataset import TrialDataset
from src.survival.measures import BUILTIN_MEASURES, MEASURES_WITH_TAU

MISSING_TOKENS = {"", "na", "nan", "null", "none"}
LEARNER_ALIASES = {
    "linear": "linear",
    "spline": "spline_additive",
    "tree": "tree",
    "forest": "random_forest",
    "super": "super_learner",
    "zero": "zero",
}


def _normalize_token(value: str) -> str:
    return str(value).strip().lower().replace("-", "_")


def learner_kind(name: str) -> str:
    """CLI 학습기 이름(linear, spline, tree, forest, super)을 내부 종류로 변환"""
    token = _normalize_token(name)
    if token in LEARNER_ALIASES:
        return LEARNER_ALIASES[token]
    if token in LEARNER_ALIASES.values():
        return token
    raise ValueError(f"알 수 없는 학습기입니다: {name} (허용: {', '.join(LEARNER_ALIASES)})")


class AnalysisConfig(BaseModel):
    """analyze 명령 설정"""
    model_config = ConfigDict(frozen=True)

    input_path: Path
    time_column: str
    event_column: str
    treatment_column: str
    treatment_level: Optional[str] = None
    continuous_covariates: List[str] = Field(default_factory=list)
    categorical_covariates: List[str] = Field(default_factory=list)
    pi: float = Field(gt=0.0, lt=1.0)
    measure: str
    tau: Optional[float] = Field(default=None, gt=0.0)
    learner: str = "linear"
    candidates: List[str] = Field(default_factory=lambda: list(DEFAULT_CANDIDATES))
    k_folds: int = Field(default=5, ge=0)
    seed: int = Field(default=12345, ge=0)
    missing_policy: Literal["fail", "median_impute"] = "median_impute"
    ci_level: float = Field(default=0.95, gt=0.0, lt=1.0)
    threads: int = Field(default=1, ge=1)

    @field_validator("measure", "missing_policy", mode="before")
    @classmethod
    def _normalize(cls, value):
        return _normalize_token(value) if isinstance(value, str) else value

    @field_validator("measure")
    @classmethod
    def _known_measure(cls, value: str) -> str:
        if value not in BUILTIN_MEASURES:
            raise ValueError(f"알 수 없는 효과 척도입니다: {value}")
        return value

    @field_validator("learner")
    @classmethod
    def _known_learner(cls, value: str) -> str:
        return learner_kind(value)

    @field_validator("candidates")
    @classmethod
    def _known_candidates(cls, values: List[str]) -> List[str]:
        return [learner_kind(v) for v in values]

    @model_validator(mode="after")
    def _check_combination(self) -> "AnalysisConfig":
        if (self.measure in MEASURES_WITH_TAU) != (self.tau is not None):
            raise ValueError(f"tau는 {', '.join(MEASURES_WITH_TAU)}에만, 그리고 반드시 지정해야 합니다")
        if self.k_folds == 1:
            raise ValueError("k_folds는 0(분할 없음) 또는 2 이상이어야 합니다")
        overlap = set(self.continuous_covariates) & set(self.categorical_covariates)
        if overlap:
            raise ValueError(f"연속형과 범주형에 동시에 지정된 열이 있습니다: {sorted(overlap)}")
        return self

    def learner_config(self) -> LearnerConfig:
        return LearnerConfig(kind=self.learner, candidates=tuple(self.candidates), n_jobs=self.threads)


@dataclass
class IngestReport:
    """수집 결과 요약"""
    n_rows: int
    imputed: Dict[str, int] = field(default_factory=dict)
    dropped_levels: Dict[str, str] = field(default_factory=dict)

    @property
    def total_imputed(self) -> int:
        return sum(self.imputed.values())


def _csv_rows(mask: np.ndarray) -> List[int]:
    # 헤더가 1행이므로 데이터 i번째 행은 파일의 i+2행
    return [int(i) + 2 for i in np.flatnonzero(mask)]


def _missing_mask(column: pd.Series) -> np.ndarray:
    return column.str.strip().str.lower().isin(MISSING_TOKENS).to_numpy()


def _parse_numeric(frame: pd.DataFrame, name: str) -> Tuple[np.ndarray, np.ndarray]:
    """(값, 결측 마스크)를 반환합니다. 결측이 아닌데 숫자가 아니면 IngestError"""
    missing = _missing_mask(frame[name])
    values = pd.to_numeric(frame[name].str.strip().where(~missing), errors="coerce").to_numpy(dtype=float)
    bad = ~missing & ~np.isfinite(values)
    if np.any(bad):
        rows = _csv_rows(bad)
        raise IngestError(f"열 '{name}'에 숫자로 해석할 수 없는 값이 있습니다 (행 {rows[:10]})", rows)
    return values, missing


def _reject_missing(name: str, missing: np.ndarray):
    if np.any(missing):
        rows = _csv_rows(missing)
        raise IngestError(f"필수 열 '{name}'에 결측값이 있습니다 (행 {rows[:10]})", rows)


def _parse_binary(frame: pd.DataFrame, name: str, level: Optional[str] = None) -> np.ndarray:
    if level is not None:
        missing = _missing_mask(frame[name])
        _reject_missing(name, missing)
        return (frame[name].str.strip() == str(level)).to_numpy().astype(int)

    values, missing = _parse_numeric(frame, name)
    _reject_missing(name, missing)
    bad = ~np.isin(values, (0.0, 1.0))
    if np.any(bad):
        rows = _csv_rows(bad)
        levels = sorted(set(frame[name].str.strip()))
        raise IngestError(f"열 '{name}'는 0/1 이진값이어야 합니다 (수준 {levels[:5]}, 행 {rows[:10]})", rows)
    return values.astype(int)


def _impute(name: str, missing: np.ndarray, policy: str, report: IngestReport):
    if not np.any(missing):
        return False
    if policy == "fail":
        rows = _csv_rows(missing)
        raise IngestError(f"공변량 '{name}'에 결측값이 있습니다 (행 {rows[:10]})", rows)
    report.imputed[name] = int(missing.sum())
    return True


def ingest_csv_with_report(config: AnalysisConfig) -> Tuple[TrialDataset, IngestReport]:
    """CSV를 읽어 TrialDataset과 수집 요약을 반환합니다."""
    path = Path(config.input_path)
    if not path.is_file():
        raise IngestError(f"입력 파일을 찾을 수 없습니다: {path}")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False, encoding="utf-8")
    except (UnicodeDecodeError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise IngestError(f"CSV 파일을 읽을 수 없습니다: {path}: {e}") from e

    required = [config.time_column, config.event_column, config.treatment_column,
                *config.continuous_covariates, *config.categorical_covariates]
    unknown = [name for name in required if name not in frame.columns]
    if unknown:
        raise IngestError(f"unknown column(s): {unknown} (파일 열: {list(frame.columns)})")

    report = IngestReport(n_rows=len(frame))
    time, time_missing = _parse_numeric(frame, config.time_column)
    _reject_missing(config.time_column, time_missing)
    event = _parse_binary(frame, config.event_column)
    treatment = _parse_binary(frame, config.treatment_column, config.treatment_level)

    columns: List[np.ndarray] = []
    names: List[str] = []
    for name in config.continuous_covariates:
        values, missing = _parse_numeric(frame, name)
        if _impute(name, missing, config.missing_policy, report):
            values[missing] = float(np.median(values[~missing]))
        columns.append(values)
        names.append(name)

    for name in config.categorical_covariates:
        raw = frame[name].str.strip()
        missing = _missing_mask(frame[name])
        if _impute(name, missing, config.missing_policy, report):
            counts = raw[~missing].value_counts()
            mode = sorted(counts[counts == counts.max()].index)[0]
            raw = raw.where(~missing, mode)
        levels = sorted(raw.unique())
        if len(levels) < 2:
            logger.warning(f"범주형 공변량 '{name}'의 수준이 하나뿐이라 제외합니다")
            continue
        report.dropped_levels[name] = levels[0]
        for level in levels[1:]:
            columns.append((raw == level).to_numpy().astype(float))
            names.append(f"{name}={level}")

    if report.imputed:
        for name, count in report.imputed.items():
            logger.warning(f"⚠️ 결측값 대체: column={name}, {count} value{'s' if count > 1 else ''} imputed")

    covariates = np.column_stack(columns) if columns else np.empty((len(frame), 0))
    dataset = TrialDataset(
        covariates=covariates,
        treatment=treatment,
        time=time,
        event=event,
        pi=config.pi,
        covariate_names=tuple(names),
    )
    logger.info(f"데이터 수집 완료: n={dataset.n}, p={dataset.p}, events={int(dataset.event.sum())}, file={path.name}")
    return dataset, report


def ingest_csv(config: AnalysisConfig) -> TrialDataset:
    """
    CSV를 읽어 TrialDataset으로 변환합니다.

    Raises:
        IngestError: 알 수 없는 열, 이진이 아닌 처리군, 숫자 해석 실패, 필수 열 결측
    """
    dataset, _ = ingest_csv_with_report(config)
    return dataset


def export_csv(dataset: TrialDataset, path: Path, time_column: str = "time",
               event_column: str = "status", treatment_column: str = "trt") -> Path:
    """TrialDataset을 CSV로 내보냅니다 (공변량은 모두 숫자 열)."""
    frame = pd.DataFrame({
        time_column: dataset.time,
        event_column: dataset.event,
        treatment_column: dataset.treatment,
    })
    for j, name in enumerate(dataset.covariate_names):
        frame[name] = dataset.covariates[:, j]
    frame.to_csv(path, index=False, encoding="utf-8")
    return Path(path)
