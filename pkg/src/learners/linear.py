"""
선형 / 가법 스플라인 학습기

두 학습기 모두 설계행렬에 대한 가중 최소제곱으로 적합하며,
정규방정식 행렬이 특이에 가까우면 작은 ridge를 더합니다.
"""

from typing import List, Tuple

import numpy as np
from loguru import logger
from scipy import linalg

from src.errors import LearnerError
from src.learners.problem import LearnerModel, RegressionProblem

SINGULAR_TOL = 1e-10
RIDGE_SCALE = 1e-8
SPLINE_QUANTILES = (0.25, 0.5, 0.75)
SPLINE_MIN_ROWS_PER_COLUMN = 10


def _weighted_least_squares(design: np.ndarray, response: np.ndarray, weight: np.ndarray) -> Tuple[np.ndarray, float]:
    """
    가중 최소제곱 계수를 구합니다.

    Returns:
        (계수, 적용한 ridge 크기). ridge가 0이면 미적용
    """
    gram = design.T @ (design * weight[:, None])
    rhs = design.T @ (weight * response)
    largest = float(np.max(np.diag(gram)))
    smallest = float(np.linalg.eigvalsh(gram)[0])

    ridge = 0.0
    if smallest < SINGULAR_TOL * largest:
        ridge = RIDGE_SCALE * float(np.trace(gram)) / gram.shape[0]
        gram = gram + ridge * np.eye(gram.shape[0])
        logger.warning(f"정규방정식이 특이에 가까워 ridge를 적용합니다: ridge={ridge:.3e}, min_eig={smallest:.3e}")
    return linalg.solve(gram, rhs, assume_a="pos"), ridge


class LinearPredictor:
    def __init__(self, coefficients: np.ndarray):
        self.coefficients = coefficients

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.coefficients[0] + features @ self.coefficients[1:]


def fit_linear(problem: RegressionProblem, rng_seed=None) -> LearnerModel:
    """
    z를 (1, W)에 가중 최소제곱 회귀합니다.

    Args:
        problem: 가중 회귀 문제

    Returns:
        LearnerModel (fitted_params["coefficients"] = (절편, β̂))

    Raises:
        LearnerError: n ≤ p+1
    """
    if problem.n <= problem.p + 1:
        raise LearnerError(f"underdetermined: n={problem.n}, p={problem.p}")

    design = np.column_stack([np.ones(problem.n), problem.features])
    coefficients, ridge = _weighted_least_squares(design, problem.response, problem.weight)
    return LearnerModel(
        kind="linear",
        estimator=LinearPredictor(coefficients),
        fitted_params={"coefficients": coefficients, "ridge": ridge},
        notes=("ridge fallback",) if ridge > 0 else (),
    )


# ---------------------------------------------------------------------------
# 가법 자연 3차 스플라인
# ---------------------------------------------------------------------------

def weighted_quantile(values: np.ndarray, weight: np.ndarray, q: float) -> float:
    """누적 가중치가 처음으로 q 이상이 되는 값"""
    order = np.argsort(values, kind="stable")
    cumulative = np.cumsum(weight[order])
    cumulative /= cumulative[-1]
    position = int(np.searchsorted(cumulative, q - 1e-12, side="left"))
    return float(values[order][min(position, values.size - 1)])


class NaturalSplineColumn:
    """
    한 공변량의 자연 3차 스플라인 기저 (절단 거듭제곱 표현)

    경계 매듭 밖에서는 선형으로 외삽됩니다.
    """

    def __init__(self, knots: np.ndarray):
        self.knots = knots
        self.low = float(knots[0])
        self.width = float(knots[-1] - knots[0])

    def _scaled(self, x: np.ndarray) -> np.ndarray:
        return (x - self.low) / self.width

    def basis(self, x: np.ndarray) -> np.ndarray:
        u = self._scaled(x)
        xi = self._scaled(self.knots)
        last = xi[-1]

        def d(k: int) -> np.ndarray:
            return (np.maximum(u - xi[k], 0.0) ** 3 - np.maximum(u - last, 0.0) ** 3) / (last - xi[k])

        d_penultimate = d(len(xi) - 2)
        columns = [x] + [d(k) - d_penultimate for k in range(len(xi) - 2)]
        return np.column_stack(columns)


class AdditivePredictor:
    def __init__(self, columns: List, coefficients: np.ndarray):
        self.columns = columns
        self.coefficients = coefficients

    def design(self, features: np.ndarray) -> np.ndarray:
        blocks = [np.ones((features.shape[0], 1))]
        for j, column in enumerate(self.columns):
            x = features[:, j]
            blocks.append(x.reshape(-1, 1) if column is None else column.basis(x))
        return np.hstack(blocks)

    def predict(self, features: np.ndarray) -> np.ndarray:
        return self.design(features) @ self.coefficients


def _spline_column(x: np.ndarray, weight: np.ndarray):
    if np.unique(x).size <= 2:
        return None
    interior = [weighted_quantile(x, weight, q) for q in SPLINE_QUANTILES]
    knots = np.unique(np.array([x.min(), *interior, x.max()]))
    if knots.size < 3:
        return None
    return NaturalSplineColumn(knots)


def fit_spline_additive(problem: RegressionProblem, rng_seed=None) -> LearnerModel:
    """
    가법 모형 Σ_j f_j(W_j)

    연속 공변량은 가중 사분위수(0.25, 0.5, 0.75)를 내부 매듭으로 하는
    자연 3차 스플라인으로 전개하고, 이진 공변량은 선형항으로 둡니다.
    모든 열이 이진이면 fit_linear와 같은 적합이 됩니다.
    """
    if problem.n < SPLINE_MIN_ROWS_PER_COLUMN * problem.p:
        raise LearnerError(f"underdetermined: spline 모형에는 n ≥ 10p가 필요합니다 (n={problem.n}, p={problem.p})")

    columns = [_spline_column(problem.features[:, j], problem.weight) for j in range(problem.p)]
    shell = AdditivePredictor(columns, np.empty(0))
    design = shell.design(problem.features)
    if problem.n <= design.shape[1]:
        raise LearnerError(f"underdetermined: n={problem.n}, 기저 수={design.shape[1]}")

    coefficients, ridge = _weighted_least_squares(design, problem.response, problem.weight)
    knots = {j: column.knots.tolist() for j, column in enumerate(columns) if column is not None}
    logger.debug(f"spline 가법 모형 적합: 기저 수={design.shape[1]}, 스플라인 열={list(knots)}")
    return LearnerModel(
        kind="spline_additive",
        estimator=AdditivePredictor(columns, coefficients),
        fitted_params={"coefficients": coefficients, "knots": knots, "ridge": ridge},
        hyperparameters={"quantiles": SPLINE_QUANTILES},
        notes=("ridge fallback",) if ridge > 0 else (),
    )
