"""
가중 최소제곱 문제와 학습기 공통 계약

최적 증강함수 b를 찾는 경험적 위험
    (1/n) Σ {ψ̂(O_i) − (A_i − π) b(W_i)}²
은 반응 z_i = ψ̂(O_i)/(A_i − π), 가중치 w_i = (A_i − π)²/n 인
가중 제곱합 Σ w_i (z_i − b(W_i))² 과 같습니다.
"""

from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Sequence, Tuple, Union

import numpy as np

from src.errors import LearnerError
from src.survival.dataset import TrialDataset
from src.survival.measures import InfluenceVector


@dataclass(frozen=True)
class RegressionProblem:
    """가중 회귀 문제 (features=W, response=z, weight=w)"""
    features: np.ndarray
    response: np.ndarray
    weight: np.ndarray
    subject_index: np.ndarray
    arm: np.ndarray

    def __post_init__(self):
        n = self.response.shape[0]
        if self.features.shape[0] != n or self.weight.shape[0] != n or self.arm.shape[0] != n:
            raise LearnerError("features, response, weight, arm의 길이가 다릅니다")
        if np.any(self.weight <= 0):
            raise LearnerError("가중치는 모두 양수여야 합니다")

    @property
    def n(self) -> int:
        return int(self.response.shape[0])

    @property
    def p(self) -> int:
        return int(self.features.shape[1])

    def risk(self, predictions: np.ndarray) -> float:
        """가중 제곱합 Σ w_i (z_i − b(W_i))²"""
        return float(np.sum(self.weight * (self.response - predictions) ** 2))

    def subset(self, indices: Sequence[int]) -> "RegressionProblem":
        idx = np.asarray(indices, dtype=int)
        return RegressionProblem(
            features=self.features[idx],
            response=self.response[idx],
            weight=self.weight[idx],
            subject_index=self.subject_index[idx],
            arm=self.arm[idx],
        )


def make_problem(data: TrialDataset, psi: Union[InfluenceVector, np.ndarray]) -> RegressionProblem:
    """
    영향함수 추정치로 가중 회귀 문제를 구성합니다.

    Args:
        data: 임상시험 데이터
        psi: 대상자별 영향함수 ψ̂(O_i)

    Returns:
        RegressionProblem (π=1/2이면 모든 가중치가 1/(4n))
    """
    values = psi.values if isinstance(psi, InfluenceVector) else np.asarray(psi, dtype=float)
    if values.shape[0] != data.n:
        raise LearnerError(f"psi 길이({values.shape[0]})가 n({data.n})과 다릅니다")
    centred = data.treatment - data.pi
    return RegressionProblem(
        features=np.asarray(data.covariates, dtype=float),
        response=values / centred,
        weight=centred ** 2 / data.n,
        subject_index=np.arange(data.n),
        arm=np.asarray(data.treatment, dtype=int),
    )


@dataclass(frozen=True)
class LearnerModel:
    """
    적합된 학습기

    estimator는 predict(features) 메서드를 가진 객체이며,
    학습 범위 밖의 유한한 공변량에서도 항상 값을 반환합니다.
    """
    kind: str
    estimator: Any
    fitted_params: Dict[str, Any] = field(default_factory=dict)
    hyperparameters: Dict[str, Any] = field(default_factory=dict)
    notes: Tuple[str, ...] = ()

    @property
    def predictor(self) -> Callable[[np.ndarray], np.ndarray]:
        return self.predict

    def predict(self, features: np.ndarray) -> np.ndarray:
        features = np.asarray(features, dtype=float)
        if features.ndim == 1:
            features = features.reshape(1, -1)
        return np.asarray(self.estimator.predict(features), dtype=float).reshape(-1)


class ConstantPredictor:
    """모든 입력에 같은 값을 반환 (b̂ ≡ c)"""

    def __init__(self, value: float = 0.0):
        self.value = float(value)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.full(features.shape[0], self.value)


def fit_zero(problem: RegressionProblem, rng_seed: Optional[int] = None) -> LearnerModel:
    """증강 없음 (b̂ ≡ 0) 기준 학습기"""
    return LearnerModel(kind="zero", estimator=ConstantPredictor(0.0))
