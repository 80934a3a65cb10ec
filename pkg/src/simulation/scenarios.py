"""
시뮬레이션 시나리오 정의 및 임상시험 데이터 생성

T | (W, A) ~ Weibull(shape 3, scale = E(T|W,A)/Γ(4/3)), W ~ N(0, I₃),
A ~ Bernoulli(π), C ~ Uniform(censor_low, censor_high), X = T∧C, Δ = I(T ≤ C)
"""

from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.special import gamma as gamma_function

from src.survival.dataset import TrialDataset

WEIBULL_SHAPE = 3.0
GAMMA_4_3 = float(gamma_function(4.0 / 3.0))
N_COVARIATES = 3
SCENARIOS = ("A", "B", "C", "D")


class ScenarioSpec(BaseModel):
    """시뮬레이션 한 칸(cell)의 설정"""
    model_config = ConfigDict(frozen=True)

    scenario: Literal["A", "B", "C", "D"]
    gamma: float = Field(ge=0.0)
    pi: float = Field(gt=0.0, lt=1.0)
    n: int = Field(ge=8)
    tau: float = Field(default=2.0, gt=0.0)
    censor_low: float = Field(default=1.0, ge=0.0)
    censor_high: float = 4.0

    @model_validator(mode="after")
    def _check_censoring(self) -> "ScenarioSpec":
        if not self.censor_high > self.censor_low:
            raise ValueError(f"censor_high({self.censor_high})는 censor_low({self.censor_low})보다 커야 합니다")
        return self

    @property
    def label(self) -> str:
        return f"scenario={self.scenario}, gamma={self.gamma:g}, pi={self.pi:.3g}, n={self.n}"


def log_conditional_mean(scenario: str, gamma: float, covariates: np.ndarray, treatment: np.ndarray) -> np.ndarray:
    """log E(T|W,A) − log Γ(4/3)"""
    w1, w2, w3 = covariates[:, 0], covariates[:, 1], covariates[:, 2]
    a = np.asarray(treatment, dtype=float)
    exponent = gamma * a + w1 + w2 - a * w2 - a * w3
    if scenario in ("C", "D"):
        exponent = exponent + 1.0 - w1 ** 2
    if scenario in ("B", "D"):
        exponent = exponent + w2 * w3
    return exponent


def conditional_mean(scenario: str, gamma: float, covariates, treatment) -> np.ndarray:
    """
    시나리오별 조건부 평균 E(T|W,A)

    Args:
        scenario: A, B, C, D
        gamma: 처리효과 크기 γ
        covariates: n×3 공변량 (1차원이면 한 명)
        treatment: 처리군 지시자

    Returns:
        E(T|W,A) 배열
    """
    covariates = np.atleast_2d(np.asarray(covariates, dtype=float))
    treatment = np.broadcast_to(np.asarray(treatment, dtype=float), (covariates.shape[0],))
    return GAMMA_4_3 * np.exp(log_conditional_mean(scenario, gamma, covariates, treatment))


def draw_event_times(rng: np.random.Generator, scenario: str, gamma: float,
                     covariates: np.ndarray, treatment) -> np.ndarray:
    """Weibull(shape 3) 사건시간 (scale = E(T|W,A)/Γ(4/3))"""
    covariates = np.atleast_2d(covariates)
    treatment = np.broadcast_to(np.asarray(treatment, dtype=float), (covariates.shape[0],))
    scale = np.exp(log_conditional_mean(scenario, gamma, covariates, treatment))
    return scale * rng.weibull(WEIBULL_SHAPE, size=covariates.shape[0])


def generate_trial(spec: ScenarioSpec, rng_seed, n: Optional[int] = None) -> TrialDataset:
    """
    시나리오에 따라 임상시험 데이터 한 세트를 생성합니다.

    Args:
        spec: 시나리오 설정
        rng_seed: 정수 시드 또는 SeedSequence (같은 시드면 같은 데이터)
        n: 표본 크기 (기본 spec.n)

    Returns:
        TrialDataset (π는 설계값)
    """
    n = n or spec.n
    rng = np.random.default_rng(rng_seed)
    covariates = rng.standard_normal((n, N_COVARIATES))
    treatment = rng.binomial(1, spec.pi, size=n)
    event_time = draw_event_times(rng, spec.scenario, spec.gamma, covariates, treatment)
    censor_time = rng.uniform(spec.censor_low, spec.censor_high, size=n)
    return TrialDataset(
        covariates=covariates,
        treatment=treatment,
        time=np.minimum(event_time, censor_time),
        event=(event_time <= censor_time).astype(int),
        pi=spec.pi,
        covariate_names=tuple(f"W{j + 1}" for j in range(N_COVARIATES)),
    )
