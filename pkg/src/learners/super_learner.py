"""
Super learner (교차검증 스태킹)

후보 학습기들의 fold 밖 예측을 비음수 최소제곱으로 결합하고
가중치를 합 1로 정규화합니다.
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from scipy.optimize import nnls
from sklearn.model_selection import StratifiedKFold

from src.config import derive_seed
from src.errors import LearnerError, SurvAugError
from src.learners.problem import LearnerModel, RegressionProblem

CandidateFitter = Callable[[RegressionProblem, int], LearnerModel]


@dataclass(frozen=True)
class SuperLearnerModel:
    """후보 학습기의 볼록결합"""
    candidate_names: Tuple[str, ...]
    candidates: Tuple[LearnerModel, ...]
    weights: np.ndarray
    cv_risks: np.ndarray
    dropped: Tuple[str, ...] = ()
    vertex_fallback: bool = False
    hyperparameters: Dict = field(default_factory=dict)

    kind = "super_learner"

    @property
    def fitted_params(self) -> Dict:
        return {
            "weights": dict(zip(self.candidate_names, self.weights.tolist())),
            "cv_risks": dict(zip(self.candidate_names, self.cv_risks.tolist())),
        }

    @property
    def notes(self) -> Tuple[str, ...]:
        notes = tuple(f"dropped {name}" for name in self.dropped)
        return notes + (("vertex fallback",) if self.vertex_fallback else ())

    @property
    def predictor(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.predict

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        combined = np.zeros(features.shape[0])
        for weight, model in zip(self.weights, self.candidates):
            if weight > 0:
                combined += weight * model.predict(features)
        return combined


def stacking_weights(problem: RegressionProblem, predictions: np.ndarray) -> Tuple[np.ndarray, bool]:
    """
    단체(simplex) 위의 결합 가중치

    NNLS 해를 합 1로 정규화합니다. 해가 모두 0이거나 정규화한 결합의
    교차검증 위험이 최선 후보보다 크면 최선 후보 하나(꼭짓점)를 선택합니다.

    Returns:
        (가중치, 꼭짓점 대체 여부)
    """
    root_weight = np.sqrt(problem.weight)
    risks = np.array([problem.risk(predictions[:, j]) for j in range(predictions.shape[1])])
    best = int(np.argmin(risks))
    vertex = np.zeros(predictions.shape[1])
    vertex[best] = 1.0

    alpha, _ = nnls(predictions * root_weight[:, None], problem.response * root_weight)
    if alpha.sum() <= 0:
        return vertex, True
    alpha = alpha / alpha.sum()
    if problem.risk(predictions @ alpha) > risks[best]:
        return vertex, True
    return alpha, False


def fit_super_learner(
    problem: RegressionProblem,
    candidates: Sequence[Tuple[str, CandidateFitter]],
    v_folds: int = 5,
    rng_seed: int = 0,
) -> SuperLearnerModel:
    """
    V-fold 교차검증 super learner

    Args:
        problem: 가중 회귀 문제
        candidates: (이름, fit(problem, seed) 함수) 목록, 2개 이상
        v_folds: 교차검증 fold 수 (처리군 층화)
        rng_seed: 난수 시드

    Returns:
        SuperLearnerModel (후보는 전체 문제에 다시 적합)

    Raises:
        LearnerError: 사전조건 위반 또는 모든 후보 실패
    """
    if len(candidates) < 2:
        raise LearnerError("super learner에는 후보가 2개 이상 필요합니다")
    if problem.n < 10 * v_folds:
        raise LearnerError(f"super learner에는 n ≥ 10·v_folds가 필요합니다 (n={problem.n}, v_folds={v_folds})")

    splitter = StratifiedKFold(n_splits=v_folds, shuffle=True, random_state=derive_seed(rng_seed, 0))
    folds = list(splitter.split(problem.features, problem.arm))

    names: List[str] = []
    models: List[LearnerModel] = []
    columns: List[np.ndarray] = []
    dropped: List[str] = []
    for j, (name, fit) in enumerate(candidates):
        try:
            out_of_fold = np.empty(problem.n)
            for v, (train_idx, test_idx) in enumerate(folds):
                model = fit(problem.subset(train_idx), derive_seed(rng_seed, j + 1, v + 1))
                out_of_fold[test_idx] = model.predict(problem.features[test_idx])
            full_model = fit(problem, derive_seed(rng_seed, j + 1))
        except (SurvAugError, ValueError, np.linalg.LinAlgError) as e:
            logger.warning(f"super learner 후보를 제외합니다: candidate={name}, error={e}")
            dropped.append(name)
            continue
        names.append(name)
        models.append(full_model)
        columns.append(out_of_fold)

    if not models:
        raise LearnerError("super learner의 모든 후보 적합이 실패했습니다")

    predictions = np.column_stack(columns)
    cv_risks = np.array([problem.risk(predictions[:, j]) for j in range(predictions.shape[1])])
    weights, vertex_fallback = stacking_weights(problem, predictions)
    logger.info(
        "super learner 가중치: "
        + ", ".join(f"{name}={w:.3f}" for name, w in zip(names, weights))
        + (" (최선 후보로 대체)" if vertex_fallback else "")
    )
    return SuperLearnerModel(
        candidate_names=tuple(names),
        candidates=tuple(models),
        weights=weights,
        cv_risks=cv_risks,
        dropped=tuple(dropped),
        vertex_fallback=vertex_fallback,
        hyperparameters={"v_folds": v_folds, "candidates": [name for name, _ in candidates]},
    )
