"""
공변량 증강 추정 엔진

θ̂(b̂) = θ̄ − (1/n) Σ (A_i − π) b̂(W_i)

표본분할 없이 전체 표본으로 ψ̂와 b̂를 적합하는 방식과,
K-fold 교차적합(cross-fitting)으로 fold 밖에서 적합해 held-out 대상자에서
평가하는 방식을 제공합니다. θ̄는 두 방식 모두 전체 표본에서 한 번 계산합니다.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from joblib import Parallel, delayed
from loguru import logger
from scipy.stats import norm

from src.config import derive_seed
from src.errors import MeasureError, PlanError
from src.learners import LearnerConfig, SuperLearnerModel, fit_learner, make_problem
from src.survival.dataset import TrialDataset
from src.survival.measures import EffectMeasureSpec, estimate, influence, out_of_fold_influence

DEFAULT_K_FOLDS = 5
MAX_PLAN_DRAWS = 100


# ---------------------------------------------------------------------------
# 교차적합 분할 계획
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CrossFitPlan:
    """
    fold 배정 V_i ∈ {1..K}

    make_plan으로 만든 계획은 모든 fold에 두 처리군이 있고
    각 처리군에 사건이 1건 이상 있습니다.
    """
    k: int
    assignment: np.ndarray
    rng_seed: Optional[int] = None

    def __post_init__(self):
        assignment = np.array(self.assignment, dtype=int).reshape(-1)
        if self.k < 2:
            raise PlanError(f"fold 수 k는 2 이상이어야 합니다: {self.k}")
        if assignment.size and (assignment.min() < 1 or assignment.max() > self.k):
            raise PlanError(f"fold 라벨은 1..{self.k} 범위여야 합니다")
        empty = [label for label in range(1, self.k + 1) if not np.any(assignment == label)]
        if empty:
            raise PlanError(f"비어 있는 fold가 있습니다: {empty}")
        assignment.setflags(write=False)
        object.__setattr__(self, "assignment", assignment)

    @property
    def n(self) -> int:
        return int(self.assignment.size)

    @classmethod
    def from_assignment(cls, assignment: Sequence[int], rng_seed: Optional[int] = None) -> "CrossFitPlan":
        """주어진 라벨을 그대로 사용하는 계획 (K=n leave-one-out 등)"""
        labels = np.asarray(assignment, dtype=int)
        return cls(k=int(labels.max()), assignment=labels, rng_seed=rng_seed)

    def folds(self) -> List[Tuple[np.ndarray, np.ndarray]]:
        """fold 라벨 순서대로 (held-out 인덱스, 나머지 인덱스) 목록"""
        return [
            (np.flatnonzero(self.assignment == label), np.flatnonzero(self.assignment != label))
            for label in range(1, self.k + 1)
        ]


def _plan_is_feasible(assignment: np.ndarray, k: int, treatment: np.ndarray, event: np.ndarray) -> bool:
    for label in range(1, k + 1):
        in_fold = assignment == label
        for arm in (0, 1):
            arm_mask = in_fold & (treatment == arm)
            if not np.any(arm_mask) or not np.any(event[arm_mask] == 1):
                return False
    return True


def make_plan(n: int, treatment, event, k: int = DEFAULT_K_FOLDS, rng_seed: int = 0) -> CrossFitPlan:
    """
    균등분포 fold 배정을 뽑고, 조건을 만족할 때까지 최대 100번 다시 뽑습니다.

    Args:
        n: 대상자 수
        treatment: 처리군 지시자 A
        event: 사건 지시자 Δ
        k: fold 수
        rng_seed: 난수 시드

    Raises:
        PlanError: 사전조건 위반 또는 100번 안에 조건을 만족하지 못한 경우
    """
    treatment = np.asarray(treatment, dtype=int)
    event = np.asarray(event, dtype=int)
    if k < 2:
        raise PlanError(f"fold 수 k는 2 이상이어야 합니다: {k}")
    if n < 4 * k:
        raise PlanError(f"cross-fit plan infeasible: n ≥ 4k가 필요합니다 (n={n}, k={k})")
    if treatment.size != n or event.size != n:
        raise PlanError("treatment, event 길이가 n과 다릅니다")

    rng = np.random.default_rng(derive_seed(rng_seed, k))
    for draw in range(1, MAX_PLAN_DRAWS + 1):
        assignment = rng.integers(1, k + 1, size=n)
        if _plan_is_feasible(assignment, k, treatment, event):
            if draw > 1:
                logger.debug(f"fold 배정 재추출: draws={draw}, k={k}")
            return CrossFitPlan(k=k, assignment=assignment, rng_seed=rng_seed)

    raise PlanError(
        f"cross-fit plan infeasible: {MAX_PLAN_DRAWS}번 추출 동안 모든 fold에 두 군과 군별 사건을 배정하지 못했습니다"
    )


# ---------------------------------------------------------------------------
# 결과 보고
# ---------------------------------------------------------------------------

def confidence_interval(point: float, se: float, level: float = 0.95) -> Tuple[float, float]:
    """정규근사 신뢰구간 point ± Φ⁻¹((1+level)/2)·se"""
    if not se > 0:
        raise MeasureError(f"표준오차는 양수여야 합니다: se={se}")
    if not 0.0 < level < 1.0:
        raise MeasureError(f"신뢰수준은 (0, 1) 범위여야 합니다: {level}")
    half_width = float(norm.ppf((1.0 + level) / 2.0)) * se
    return point - half_width, point + half_width


@dataclass(frozen=True)
class EstimateRow:
    """표의 한 행 (추정치, 표준오차, 신뢰구간)"""
    label: str
    point: float
    se: float
    ci: Tuple[float, float]


@dataclass(frozen=True)
class EstimateReport:
    """비보정 / 증강 추정 결과와 출처 정보"""
    measure: EffectMeasureSpec
    learner: str
    hyperparameters: Dict[str, Any]
    splitting: Optional[CrossFitPlan]
    ci_level: float
    seed: int
    unadjusted: EstimateRow
    augmented: EstimateRow
    candidates: Tuple[EstimateRow, ...] = ()
    unadjusted_cross_fit_se: Optional[float] = None
    notes: Tuple[str, ...] = field(default=())

    @property
    def rows(self) -> List[EstimateRow]:
        return [self.unadjusted, *self.candidates, self.augmented]


def _row(label: str, point: float, residual: np.ndarray, level: float) -> EstimateRow:
    se = float(np.sqrt(np.mean(residual ** 2) / residual.size))
    return EstimateRow(label=label, point=float(point), se=se, ci=confidence_interval(point, se, level))


def _augmented_row(label: str, theta: float, psi: np.ndarray, centred: np.ndarray,
                   prediction: np.ndarray, level: float) -> EstimateRow:
    term = centred * prediction
    return _row(label, theta - float(np.mean(term)), psi - term, level)


def _learner_label(learner: Union[LearnerConfig, str]) -> str:
    return learner.label if isinstance(learner, LearnerConfig) else str(learner)


def _candidate_predictions(model, covariates: np.ndarray) -> Dict[str, np.ndarray]:
    if not isinstance(model, SuperLearnerModel):
        return {}
    return {name: candidate.predict(covariates) for name, candidate in zip(model.candidate_names, model.candidates)}


def augment_no_split(
    data: TrialDataset,
    spec: EffectMeasureSpec,
    learner: Union[LearnerConfig, str],
    rng_seed: int = 0,
    ci_level: float = 0.95,
    n_jobs: int = 1,
) -> EstimateReport:
    """
    표본분할 없는 증강 추정량 θ̂(b̂)와 σ̂²(b̂)

    Args:
        data: 임상시험 데이터
        spec: 효과 척도
        learner: 학습기 설정 또는 종류 이름
        rng_seed: 학습기 난수 시드
        ci_level: 신뢰수준
        n_jobs: jackknife 병렬 수

    Returns:
        EstimateReport (splitting=None)
    """
    theta = estimate(spec, data)
    psi = influence(spec, data, n_jobs=n_jobs).values
    problem = make_problem(data, psi)
    model = fit_learner(learner, problem, derive_seed(rng_seed))
    centred = data.treatment - data.pi

    prediction = model.predict(data.covariates)
    candidates = tuple(
        _augmented_row(name, theta, psi, centred, values, ci_level)
        for name, values in _candidate_predictions(model, data.covariates).items()
    )
    report = EstimateReport(
        measure=spec,
        learner=_learner_label(learner),
        hyperparameters=dict(model.hyperparameters),
        splitting=None,
        ci_level=ci_level,
        seed=rng_seed,
        unadjusted=_row("Unadjusted", theta, psi, ci_level),
        augmented=_augmented_row("Augmented", theta, psi, centred, prediction, ci_level),
        candidates=candidates,
        notes=tuple(model.notes),
    )
    logger.info(
        f"증강 추정 완료: measure={spec.id}, learner={report.learner}, "
        f"unadjusted={report.unadjusted.point:.4f} ({report.unadjusted.se:.4f}), "
        f"augmented={report.augmented.point:.4f} ({report.augmented.se:.4f})"
    )
    return report


def _fit_fold(data: TrialDataset, spec: EffectMeasureSpec, learner, held_idx: np.ndarray,
              train_idx: np.ndarray, fold_seed: int):
    train = data.subset(train_idx)
    held = data.block(held_idx)
    psi_train = influence(spec, train)
    model = fit_learner(learner, make_problem(train, psi_train), fold_seed)
    psi_held = out_of_fold_influence(spec, train, held)
    return (
        psi_held,
        model.predict(held.covariates),
        _candidate_predictions(model, held.covariates),
        tuple(model.notes),
        dict(model.hyperparameters),
    )


def augment_cross_fit(
    data: TrialDataset,
    spec: EffectMeasureSpec,
    learner: Union[LearnerConfig, str],
    plan: CrossFitPlan,
    ci_level: float = 0.95,
    n_jobs: int = 1,
) -> EstimateReport:
    """
    K-fold 교차적합 증강 추정량 θ̃(b̃)와 σ̃²(b̃)

    fold k의 ψ̂^(−k), b̃^(−k)는 나머지 fold에서 적합하고 fold k 대상자에서 평가합니다.
    fold 학습기 시드는 (plan 시드, fold 안 최소 대상자 인덱스)에서 파생되므로
    fold 라벨을 바꿔도 결과가 같습니다.
    """
    if plan.n != data.n:
        raise PlanError(f"분할 계획 크기({plan.n})가 데이터 크기({data.n})와 다릅니다")

    theta = estimate(spec, data)
    psi_full = influence(spec, data, n_jobs=n_jobs).values
    base_seed = plan.rng_seed or 0
    folds = plan.folds()

    results = Parallel(n_jobs=n_jobs, prefer="threads")(
        delayed(_fit_fold)(data, spec, learner, held_idx, train_idx, derive_seed(base_seed, int(held_idx.min())))
        for held_idx, train_idx in folds
    )

    psi_oof = np.empty(data.n)
    prediction = np.empty(data.n)
    candidate_oof: Dict[str, np.ndarray] = {}
    shared_candidates = None
    notes: List[str] = []
    hyperparameters: Dict[str, Any] = {}
    for (held_idx, _), (psi_held, pred_held, cand_held, fold_notes, fold_hyper) in zip(folds, results):
        hyperparameters.update(fold_hyper)
        psi_oof[held_idx] = psi_held
        prediction[held_idx] = pred_held
        names = set(cand_held)
        shared_candidates = names if shared_candidates is None else shared_candidates & names
        for name, values in cand_held.items():
            candidate_oof.setdefault(name, np.empty(data.n))[held_idx] = values
        notes.extend(note for note in fold_notes if note not in notes)
        logger.debug(f"fold 적합 완료: held_out={held_idx.size}, train={data.n - held_idx.size}")

    centred = data.treatment - data.pi
    candidates = tuple(
        _augmented_row(name, theta, psi_oof, centred, candidate_oof[name], ci_level)
        for name in candidate_oof
        if name in (shared_candidates or set())
    )
    report = EstimateReport(
        measure=spec,
        learner=_learner_label(learner),
        hyperparameters={**hyperparameters, "k_folds": plan.k},
        splitting=plan,
        ci_level=ci_level,
        seed=base_seed,
        unadjusted=_row("Unadjusted", theta, psi_full, ci_level),
        augmented=_augmented_row("Augmented", theta, psi_oof, centred, prediction, ci_level),
        candidates=candidates,
        unadjusted_cross_fit_se=float(np.sqrt(np.mean(psi_oof ** 2) / data.n)),
        notes=tuple(notes),
    )
    logger.info(
        f"교차적합 증강 추정 완료: measure={spec.id}, learner={report.learner}, k={plan.k}, "
        f"augmented={report.augmented.point:.4f} ({report.augmented.se:.4f})"
    )
    return report
