"""
처리효과 척도 모듈

효과 척도마다 점추정량 θ̄와 대상자별 영향함수 추정치 ψ̂(O_i)를 제공합니다.
내장 척도(log_hr, surv_diff, rmst_diff, mean_diff)는 해석적 영향함수를,
사용자 정의 척도는 jackknife 경험적 영향함수를 기본으로 사용합니다.

정규화 규약: (1/n)Σψ̂_i ≈ 0 이고 (1/n²)Σψ̂_i² 가 θ̄의 분산 추정치입니다.
"""

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from joblib import Parallel, delayed
from loguru import logger

from src.errors import JackknifeError, MeasureError, SurvAugError
from src.survival.core import cox_unadjusted, kaplan_meier, risk_table, rmst
from src.survival.dataset import ObservationBlock, TrialDataset

BUILTIN_MEASURES = ("log_hr", "surv_diff", "rmst_diff", "mean_diff")
MEASURES_WITH_TAU = ("surv_diff", "rmst_diff")
MEASURE_IDS = BUILTIN_MEASURES + ("custom",)
INFLUENCE_MODES = ("analytic", "jackknife")

MEASURE_LABELS = {
    "log_hr": "log-HR",
    "surv_diff": "difference in survival probability",
    "rmst_diff": "difference in RMST",
    "mean_diff": "difference in mean",
    "custom": "user-defined",
}


@dataclass(frozen=True)
class EffectMeasureSpec:
    """
    효과 척도 정의

    Args:
        id: log_hr, surv_diff, rmst_diff, mean_diff, custom 중 하나
        tau: surv_diff / rmst_diff의 기준 시점
        estimator: custom 척도의 추정 함수 (TrialDataset → float)
        analytic: custom 척도의 해석적 영향함수 (train, block → ψ 값)
        influence_mode: analytic 또는 jackknife (미지정 시 자동 결정)
    """
    id: str
    tau: Optional[float] = None
    estimator: Optional[Callable[[TrialDataset], float]] = None
    analytic: Optional[Callable[[TrialDataset, ObservationBlock], np.ndarray]] = None
    influence_mode: Optional[str] = None
    name: Optional[str] = None

    def __post_init__(self):
        if self.id not in MEASURE_IDS:
            raise MeasureError(f"알 수 없는 효과 척도입니다: {self.id} (허용: {', '.join(MEASURE_IDS)})")
        needs_tau = self.id in MEASURES_WITH_TAU
        if needs_tau and (self.tau is None or not self.tau > 0):
            raise MeasureError(f"{self.id}에는 양수 tau가 필요합니다")
        if not needs_tau and self.tau is not None:
            raise MeasureError(f"{self.id}에는 tau를 지정하지 않습니다")
        if self.id == "custom" and self.estimator is None:
            raise MeasureError("custom 척도에는 estimator 함수가 필요합니다")

        mode = self.influence_mode
        if mode is None:
            if self.id == "custom":
                mode = "analytic" if self.analytic is not None else "jackknife"
            else:
                mode = "analytic"
        if mode not in INFLUENCE_MODES:
            raise MeasureError(f"influence_mode는 {INFLUENCE_MODES} 중 하나여야 합니다: {mode}")
        if mode == "analytic" and self.id == "custom" and self.analytic is None:
            raise MeasureError("해석적 영향함수가 없는 custom 척도는 jackknife만 가능합니다")
        object.__setattr__(self, "influence_mode", mode)

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        suffix = f" (tau={self.tau:g})" if self.tau is not None else ""
        return f"{MEASURE_LABELS[self.id]}{suffix}"


@dataclass(frozen=True)
class InfluenceVector:
    """대상자별 영향함수 추정치 ψ̂(O_i)"""
    values: np.ndarray
    measure_id: str
    provenance: str

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if not np.all(np.isfinite(values)):
            raise MeasureError(f"영향함수에 비유한 값이 있습니다 (measure={self.measure_id})")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def n(self) -> int:
        return int(self.values.size)

    @property
    def variance(self) -> float:
        """θ̄의 분산 추정치 (1/n²)Σψ̂²"""
        return float(np.sum(self.values ** 2) / self.n ** 2)

    @property
    def se(self) -> float:
        return float(np.sqrt(self.variance))


# ---------------------------------------------------------------------------
# 점추정
# ---------------------------------------------------------------------------

def _check_measure_data(spec: EffectMeasureSpec, data: TrialDataset) -> None:
    if spec.id in MEASURES_WITH_TAU:
        for arm in (0, 1):
            if spec.tau > data.time[data.treatment == arm].max():
                raise MeasureError(
                    f"tau outside support: tau={spec.tau:g}가 군 {arm}의 최대 관측시간을 넘습니다"
                )
    if spec.id == "mean_diff" and np.any(data.event == 0):
        raise MeasureError("mean_diff requires uncensored data")


def estimate(spec: EffectMeasureSpec, data: TrialDataset) -> float:
    """
    비보정 점추정량 θ̄를 계산합니다.

    Args:
        spec: 효과 척도 정의
        data: 임상시험 데이터

    Returns:
        θ̄ (처리군 1 대 0)
    """
    _check_measure_data(spec, data)

    if spec.id == "log_hr":
        return cox_unadjusted(data).log_hr

    if spec.id in MEASURES_WITH_TAU:
        curves = [
            kaplan_meier(data.time[data.treatment == arm], data.event[data.treatment == arm])
            for arm in (0, 1)
        ]
        if spec.id == "surv_diff":
            return float(curves[1](spec.tau) - curves[0](spec.tau))
        return rmst(curves[1], spec.tau) - rmst(curves[0], spec.tau)

    if spec.id == "mean_diff":
        return float(data.time[data.treatment == 1].mean() - data.time[data.treatment == 0].mean())

    return float(spec.estimator(data))


# ---------------------------------------------------------------------------
# 해석적 영향함수 (nuisance 적합 → 임의 대상자에서 평가)
# ---------------------------------------------------------------------------

class _ArmCurve:
    """
    한 처리군의 곱한계 곡선과 위험집합

    KM 선형화의 마팅게일 증분을 사건 직후 위험집합 비율 (y_k − d_k)/n_a로
    나눕니다. 이 정규화에서 (1/n_a²)Σφ²는 Greenwood 분산과 정확히 같습니다.
    """

    def __init__(self, time: np.ndarray, event: np.ndarray):
        table = risk_table(time, event)
        self.n = table.n
        self.event_times = table.event_times
        self.at_risk = table.at_risk
        self.deaths = table.deaths
        self.sorted_times = np.sort(time)
        self.km = kaplan_meier(time, event)

    def _scale(self, at_risk: np.ndarray, deaths: np.ndarray) -> np.ndarray:
        post = at_risk - deaths
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(post > 0, self.n / np.where(post > 0, post, 1.0), 0.0)

    def _tail_area(self, start: np.ndarray, tau: float) -> np.ndarray:
        return self.km.cumulative_area(tau) - self.km.cumulative_area(np.minimum(start, tau))

    def influence(self, time: np.ndarray, event: np.ndarray, tau: float, functional: str) -> np.ndarray:
        """
        이 군의 Ŝ(τ) 또는 RMST(τ)에 대한 대상자별 영향 φ

        φ = −Σ_{t_k ≤ min(X,τ)} g_k · c_k · (dN(t_k) − Y(t_k) d_k / y_k)
        (surv: g_k = Ŝ(τ), rmst: g_k = ∫_{t_k}^τ Ŝ(t)dt)
        """
        t = self.event_times
        if functional == "surv":
            g = np.full(t.shape, float(self.km(tau)))
        else:
            g = self._tail_area(t, tau)
        weights = np.where(t <= tau, g * self._scale(self.at_risk, self.deaths), 0.0)
        cum = np.concatenate([[0.0], np.cumsum(weights * self.deaths / self.at_risk)])
        compensator = cum[np.searchsorted(t, np.minimum(time, tau), side="right")]

        # 대상자 자신의 사건 시점에서의 증분
        at_risk_x = (self.n - np.searchsorted(self.sorted_times, time, side="left")).astype(float)
        deaths_x = np.zeros(time.shape)
        if t.size:
            pos = np.minimum(np.searchsorted(t, time, side="left"), t.size - 1)
            hit = t[pos] == time
            deaths_x[hit] = self.deaths[pos[hit]]
        if functional == "surv":
            g_x = np.full(time.shape, float(self.km(tau)))
        else:
            g_x = self._tail_area(time, tau)
        jump = event * (time <= tau) * g_x * self._scale(at_risk_x, deaths_x)
        return -(jump - compensator)


class _SurvivalInfluence:
    def __init__(self, data: TrialDataset, tau: float, functional: str):
        self.pi = data.pi
        self.tau = tau
        self.functional = functional
        self.curves = [
            _ArmCurve(data.time[data.treatment == arm], data.event[data.treatment == arm])
            for arm in (0, 1)
        ]

    def evaluate(self, block: ObservationBlock) -> np.ndarray:
        psi = np.zeros(block.n)
        for arm, sign, share in ((1, 1.0, self.pi), (0, -1.0, 1.0 - self.pi)):
            mask = block.treatment == arm
            if not np.any(mask):
                continue
            phi = self.curves[arm].influence(
                block.time[mask], block.event[mask].astype(float), self.tau, self.functional
            )
            psi[mask] = sign * phi / share
        return psi


class _CoxInfluence:
    def __init__(self, data: TrialDataset):
        self.fit = cox_unadjusted(data)

    def evaluate(self, block: ObservationBlock) -> np.ndarray:
        residuals = self.fit.residuals_at(block.treatment, block.time, block.event)
        return residuals * self.fit.n / self.fit.information


class _MeanInfluence:
    def __init__(self, data: TrialDataset):
        self.pi = data.pi
        self.mean1 = float(data.time[data.treatment == 1].mean())
        self.mean0 = float(data.time[data.treatment == 0].mean())

    def evaluate(self, block: ObservationBlock) -> np.ndarray:
        a = block.treatment.astype(float)
        return (a / self.pi) * (block.time - self.mean1) - ((1 - a) / (1 - self.pi)) * (block.time - self.mean0)


class _UserInfluence:
    def __init__(self, spec: EffectMeasureSpec, data: TrialDataset):
        self.function = spec.analytic
        self.train = data

    def evaluate(self, block: ObservationBlock) -> np.ndarray:
        return np.asarray(self.function(self.train, block), dtype=float).reshape(-1)


def fit_influence_model(spec: EffectMeasureSpec, data: TrialDataset):
    """
    해석적 영향함수의 nuisance(KM 곡선, Cox 추정치·정보량, 군 평균)를 적합합니다.

    Returns:
        evaluate(block) 메서드를 가진 객체
    """
    _check_measure_data(spec, data)
    if spec.id == "log_hr":
        return _CoxInfluence(data)
    if spec.id == "surv_diff":
        return _SurvivalInfluence(data, spec.tau, "surv")
    if spec.id == "rmst_diff":
        return _SurvivalInfluence(data, spec.tau, "rmst")
    if spec.id == "mean_diff":
        return _MeanInfluence(data)
    if spec.analytic is not None:
        return _UserInfluence(spec, data)
    raise MeasureError(f"{spec.id} 척도에는 해석적 영향함수가 없습니다")


def analytic_influence(spec: EffectMeasureSpec, data: TrialDataset) -> InfluenceVector:
    """
    추정된 nuisance를 해석적 영향함수 식에 대입해 ψ̂(O_i)를 계산합니다.

    Args:
        spec: 효과 척도 정의 (내장 척도 또는 analytic이 지정된 custom)
        data: 임상시험 데이터

    Returns:
        InfluenceVector (provenance="analytic")
    """
    values = fit_influence_model(spec, data).evaluate(data.block())
    sd = float(np.std(values))
    if abs(values.mean()) > 1e-6 * sd + 1e-12:
        logger.warning(f"영향함수 평균이 0에서 벗어났습니다: measure={spec.id}, mean={values.mean():.3e}, sd={sd:.3e}")
    return InfluenceVector(values=values, measure_id=spec.id, provenance="analytic")


# ---------------------------------------------------------------------------
# 재표집 기반 경험적 영향함수
# ---------------------------------------------------------------------------

def _leave_one_out(spec: EffectMeasureSpec, data: TrialDataset, index: int) -> float:
    try:
        return estimate(spec, data.without(index))
    except SurvAugError as e:
        raise JackknifeError(
            f"leave-one-out estimation failed for subject {index}: {e}", subject_index=index
        ) from e


def jackknife_influence(spec: EffectMeasureSpec, data: TrialDataset, n_jobs: int = 1) -> InfluenceVector:
    """
    Jackknife 경험적 영향함수 ψ̂(O_i) = (n−1)(θ̂ − θ̂_(−i)), 표본평균을 빼서 중심화

    Args:
        spec: 효과 척도 정의
        data: 임상시험 데이터
        n_jobs: leave-one-out 적합 병렬 수 (결과는 순서와 무관)

    Raises:
        JackknifeError: 어떤 대상자의 leave-one-out 추정이 실패한 경우
    """
    theta = estimate(spec, data)
    loo = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_leave_one_out)(spec, data, i) for i in range(data.n)
    )
    raw = (data.n - 1) * (theta - np.asarray(loo, dtype=float))
    logger.debug(f"jackknife 완료: measure={spec.id}, n={data.n}")
    return InfluenceVector(values=raw - raw.mean(), measure_id=spec.id, provenance="jackknife")


def influence(spec: EffectMeasureSpec, data: TrialDataset, n_jobs: int = 1) -> InfluenceVector:
    """spec.influence_mode에 따라 해석적 또는 jackknife 영향함수를 계산합니다."""
    if spec.influence_mode == "jackknife":
        return jackknife_influence(spec, data, n_jobs=n_jobs)
    return analytic_influence(spec, data)


def out_of_fold_influence(spec: EffectMeasureSpec, train: TrialDataset, held_out: ObservationBlock) -> np.ndarray:
    """
    ψ̂^(−k)(O_i): train에서 적합한 nuisance를 held-out 대상자에서 평가합니다.

    jackknife 모드에서는 add-one 규칙 n_k·(θ̂_{train+i} − θ̂_train)을 사용합니다.
    """
    if spec.influence_mode == "analytic":
        return fit_influence_model(spec, train).evaluate(held_out)

    theta_train = estimate(spec, train)
    values = np.empty(held_out.n)
    for j in range(held_out.n):
        try:
            values[j] = train.n * (estimate(spec, train.with_subject(held_out, j)) - theta_train)
        except SurvAugError as e:
            raise JackknifeError(
                f"add-one estimation failed for held-out subject {j}: {e}", subject_index=j
            ) from e
    return values
