"""
생존분석 기본 연산 모듈

Kaplan–Meier, Nelson–Aalen, 제한평균생존시간(RMST) 적분,
단일 이진 공변량(처리군) Cox 부분우도 Newton–Raphson 해법을 제공합니다.
모든 함수는 입력에 대한 순수 함수입니다.
"""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from loguru import logger
from scipy.special import expit

from src.errors import DegenerateLikelihoodError, SurvivalError
from src.survival.dataset import TrialDataset

# Newton–Raphson 수렴 기준
SCORE_TOL = 1e-9
STEP_TOL = 1e-10
MAX_ITER = 50
MAX_HALVINGS = 30


@dataclass(frozen=True)
class StepFunction:
    """
    우연속 계단함수

    [0, t_1)에서는 initial_value, [t_k, t_{k+1})에서는 values[k] 값을 갖습니다.
    """
    jump_times: np.ndarray
    values: np.ndarray
    initial_value: float = 1.0

    def __post_init__(self):
        jump_times = np.array(self.jump_times, dtype=float).reshape(-1)
        values = np.array(self.values, dtype=float).reshape(-1)
        if jump_times.shape != values.shape:
            raise SurvivalError("jump_times와 values의 길이가 다릅니다")
        if jump_times.size and (np.any(jump_times <= 0) or np.any(np.diff(jump_times) <= 0)):
            raise SurvivalError("jump_times는 양수이며 순증가해야 합니다")
        object.__setattr__(self, "jump_times", jump_times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "initial_value", float(self.initial_value))

    def __call__(self, t):
        t_arr = np.asarray(t, dtype=float)
        idx = np.searchsorted(self.jump_times, t_arr, side="right") - 1
        padded = np.concatenate([[self.initial_value], self.values])
        result = padded[idx + 1]
        return float(result) if result.ndim == 0 else result

    def cumulative_area(self, upper) -> np.ndarray:
        """
        [0, upper] 구간 넓이를 정확히 계산합니다 (구간 길이 × 값의 합).

        Args:
            upper: 상한 (스칼라 또는 배열, 0 이상)

        Returns:
            upper와 같은 모양의 넓이
        """
        upper_arr = np.asarray(upper, dtype=float)
        knots = np.concatenate([[0.0], self.jump_times])
        heights = np.concatenate([[self.initial_value], self.values])
        knot_area = np.concatenate([[0.0], np.cumsum(np.diff(knots) * heights[:-1])])
        j = np.searchsorted(knots, upper_arr, side="right") - 1
        j = np.clip(j, 0, None)
        area = knot_area[j] + (upper_arr - knots[j]) * heights[j]
        return float(area) if area.ndim == 0 else area

    def area(self, lower: float, upper: float) -> float:
        """[lower, upper] 구간 넓이"""
        return float(self.cumulative_area(upper) - self.cumulative_area(lower))


@dataclass(frozen=True)
class RiskTable:
    """서로 다른 사건시점별 위험집합 크기와 사건 수"""
    event_times: np.ndarray
    at_risk: np.ndarray
    deaths: np.ndarray
    n: int


def _check_sample(times, events) -> Tuple[np.ndarray, np.ndarray]:
    times = np.asarray(times, dtype=float).reshape(-1)
    events = np.asarray(events).reshape(-1)
    if times.size == 0:
        raise SurvivalError("empty sample")
    if times.shape != events.shape:
        raise SurvivalError(f"times({times.size})와 events({events.size})의 길이가 다릅니다")
    if np.any(~np.isfinite(times)) or np.any(times <= 0):
        raise SurvivalError("times는 유한한 양수여야 합니다")
    if not np.all(np.isin(events, (0, 1))):
        raise SurvivalError("events에는 0 또는 1만 허용됩니다")
    return times, events.astype(int)


def risk_table(times, events) -> RiskTable:
    """
    사건시점별 위험집합을 계산합니다.

    같은 시점의 사건은 중도절단보다 먼저 처리합니다. 즉 t_k에 중도절단된
    대상자도 t_k의 위험집합에 포함됩니다.
    """
    times, events = _check_sample(times, events)
    event_times, deaths = np.unique(times[events == 1], return_counts=True)
    sorted_times = np.sort(times)
    at_risk = times.size - np.searchsorted(sorted_times, event_times, side="left")
    return RiskTable(event_times, at_risk.astype(float), deaths.astype(float), int(times.size))


def kaplan_meier(times, events) -> StepFunction:
    """
    Kaplan–Meier 곱한계 추정량

    Args:
        times: 관측시간 X (양수)
        events: 사건 지시자 Δ

    Returns:
        서로 다른 사건시점에서만 떨어지는 생존 계단함수 (초기값 1)
    """
    table = risk_table(times, events)
    survival = np.cumprod(1.0 - table.deaths / table.at_risk)
    return StepFunction(table.event_times, survival, initial_value=1.0)


def nelson_aalen(times, events) -> StepFunction:
    """Nelson–Aalen 누적위험 추정량 Λ̂(t) = Σ_{t_k≤t} d_k / y_k"""
    table = risk_table(times, events)
    cumulative = np.cumsum(table.deaths / table.at_risk)
    return StepFunction(table.event_times, cumulative, initial_value=0.0)


def rmst(surv: StepFunction, tau: float) -> float:
    """
    제한평균생존시간 ∫_0^τ S(t) dt

    계단함수의 넓이를 직접 합산하므로 구적 오차가 없습니다.
    """
    if not tau > 0:
        raise SurvivalError(f"tau는 양수여야 합니다: {tau}")
    return float(surv.cumulative_area(tau))


def greenwood_variance(times, events, tau: float) -> float:
    """Greenwood 분산 Ŝ(τ)² Σ_{t_k≤τ} d_k / (y_k (y_k − d_k))"""
    table = risk_table(times, events)
    keep = table.event_times <= tau
    d, y = table.deaths[keep], table.at_risk[keep]
    surv_tau = float(np.prod(1.0 - d / y))
    if np.any(y == d):
        return 0.0
    return surv_tau ** 2 * float(np.sum(d / (y * (y - d))))


# ---------------------------------------------------------------------------
# Cox 부분우도 (공변량 A 하나, Breslow 동점 처리)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CoxFit:
    """
    비보정 Cox 적합 결과

    위험집합 곡선을 함께 보관하므로 다른 대상자(held-out)에서도
    score residual을 평가할 수 있습니다.
    """
    log_hr: float
    information: float
    score_residuals: np.ndarray
    event_times: np.ndarray
    at_risk0: np.ndarray
    at_risk1: np.ndarray
    deaths: np.ndarray
    sorted_times0: np.ndarray
    sorted_times1: np.ndarray
    n: int
    iterations: int

    @property
    def score(self) -> float:
        return float(np.sum(self.score_residuals))

    @property
    def robust_variance(self) -> float:
        """Lin–Wei 로버스트 분산 Σ U_i² / I²"""
        return float(np.sum(self.score_residuals ** 2) / self.information ** 2)

    def residuals_at(self, treatment, time, event) -> np.ndarray:
        """
        적합된 위험집합 곡선으로 임의 대상자의 score residual U_i를 평가합니다.

        U_i = Δ_i (A_i − Ā(X_i)) − ∫_0^{X_i} (A_i − Ā(t)) e^{βA_i} dΛ̂_0(t)
        """
        return _score_residuals(
            self.log_hr, self.event_times, self.at_risk0, self.at_risk1, self.deaths,
            self.sorted_times0, self.sorted_times1,
            np.asarray(treatment, dtype=float), np.asarray(time, dtype=float),
            np.asarray(event, dtype=float),
        )


def _cox_terms(beta: float, at_risk0, at_risk1, deaths, deaths1):
    """부분로그우도, score, 정보량"""
    with np.errstate(divide="ignore"):
        log0 = np.log(at_risk0)
        log1 = np.log(at_risk1)
    log_s0 = np.logaddexp(log0, log1 + beta)
    loglik = float(np.sum(deaths1 * beta - deaths * log_s0))
    prob1 = expit(beta + log1 - log0)
    score = float(np.sum(deaths1 - deaths * prob1))
    information = float(np.sum(deaths * prob1 * (1.0 - prob1)))
    return loglik, score, information


def _at_risk_counts(sorted_times: np.ndarray, at: np.ndarray) -> np.ndarray:
    return (sorted_times.size - np.searchsorted(sorted_times, at, side="left")).astype(float)


def _score_residuals(beta, event_times, at_risk0, at_risk1, deaths,
                     sorted_times0, sorted_times1, treatment, time, event) -> np.ndarray:
    ratio = np.exp(beta)
    s0 = at_risk0 + at_risk1 * ratio
    abar = at_risk1 * ratio / s0
    d_lambda = deaths / s0
    cum_hazard = np.concatenate([[0.0], np.cumsum(d_lambda)])
    cum_abar_hazard = np.concatenate([[0.0], np.cumsum(abar * d_lambda)])

    idx = np.searchsorted(event_times, time, side="right")
    risk = np.exp(beta * treatment)
    compensator = risk * (treatment * cum_hazard[idx] - cum_abar_hazard[idx])

    # X_i 시점의 위험집합 평균 Ā(X_i)
    y0 = _at_risk_counts(sorted_times0, time)
    y1 = _at_risk_counts(sorted_times1, time)
    s0_at = y0 + y1 * ratio
    with np.errstate(invalid="ignore", divide="ignore"):
        abar_at = np.where(s0_at > 0, y1 * ratio / s0_at, treatment)
    jump = event * (treatment - abar_at)
    return jump - compensator


def cox_unadjusted(data: TrialDataset) -> CoxFit:
    """
    처리군 지시자 하나만 있는 Cox 모형의 최대 부분우도 추정

    Args:
        data: 임상시험 데이터

    Returns:
        CoxFit (log-HR, 관측 정보량, Lin–Wei score residual 등)

    Raises:
        DegenerateLikelihoodError: 단조 우도(유한한 최대점 없음) 또는 비수렴
    """
    time, event, treatment = data.time, data.event, data.treatment
    table = risk_table(time, event)
    sorted0 = np.sort(time[treatment == 0])
    sorted1 = np.sort(time[treatment == 1])
    at_risk0 = _at_risk_counts(sorted0, table.event_times)
    at_risk1 = _at_risk_counts(sorted1, table.event_times)
    event_times1, counts1 = np.unique(time[(event == 1) & (treatment == 1)], return_counts=True)
    deaths1 = np.zeros_like(table.deaths)
    deaths1[np.searchsorted(table.event_times, event_times1)] = counts1

    # score의 β→±∞ 극한이 부호를 바꾸지 않으면 유한한 근이 없습니다
    score_upper = deaths1.sum() - table.deaths[at_risk1 > 0].sum()
    score_lower = deaths1.sum() - table.deaths[at_risk0 == 0].sum()
    if score_upper >= 0 or score_lower <= 0:
        raise DegenerateLikelihoodError(
            "partial likelihood degenerate: 단조 우도로 유한한 최대점이 없습니다"
        )

    beta = 0.0
    loglik, score, information = _cox_terms(beta, at_risk0, at_risk1, table.deaths, deaths1)
    converged = False
    iteration = 0
    for iteration in range(1, MAX_ITER + 1):
        if abs(score) < SCORE_TOL:
            converged = True
            break
        step = score / information
        candidate = beta + step
        cand_loglik, cand_score, cand_info = _cox_terms(candidate, at_risk0, at_risk1, table.deaths, deaths1)
        halvings = 0
        while cand_loglik < loglik and halvings < MAX_HALVINGS:
            step /= 2.0
            candidate = beta + step
            cand_loglik, cand_score, cand_info = _cox_terms(candidate, at_risk0, at_risk1, table.deaths, deaths1)
            halvings += 1
        beta, loglik, score, information = candidate, cand_loglik, cand_score, cand_info
        logger.debug(f"Cox Newton 반복 {iteration}: beta={beta:.12f}, score={score:.3e}, halvings={halvings}")
        if abs(step) <= STEP_TOL * max(1.0, abs(beta)):
            converged = True
            break

    if not converged or not np.isfinite(beta) or information <= 0:
        raise DegenerateLikelihoodError(
            f"partial likelihood degenerate: {MAX_ITER}회 안에 수렴하지 않았습니다 (beta={beta})"
        )

    residuals = _score_residuals(
        beta, table.event_times, at_risk0, at_risk1, table.deaths, sorted0, sorted1,
        treatment.astype(float), time, event.astype(float),
    )
    return CoxFit(
        log_hr=float(beta),
        information=float(information),
        score_residuals=residuals,
        event_times=table.event_times,
        at_risk0=at_risk0,
        at_risk1=at_risk1,
        deaths=table.deaths,
        sorted_times0=sorted0,
        sorted_times1=sorted1,
        n=data.n,
        iterations=iteration,
    )
