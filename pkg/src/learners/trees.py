"""
회귀나무 / 랜덤포레스트 학습기 (가중 제곱오차)

회귀나무는 numpy로 직접 구현한 CART이고, 랜덤포레스트는 scikit-learn을 사용합니다.
"""

import math
from typing import List, Optional, Tuple

import numpy as np
from loguru import logger
from sklearn.ensemble import RandomForestRegressor

from src.config import derive_seed
from src.errors import LearnerError
from src.learners.problem import LearnerModel, RegressionProblem

TREE_MIN_ROWS = 20

# 이 상대 오차 안의 SSE 감소량은 동률로 봅니다
TIE_RTOL = 1e-12

LEAF = -1


def _check_rows(problem: RegressionProblem, kind: str) -> None:
    if problem.p == 0:
        raise LearnerError(f"{kind}에는 공변량이 1개 이상 필요합니다 (p=0)")
    if problem.n < TREE_MIN_ROWS:
        raise LearnerError(f"{kind}에는 n ≥ {TREE_MIN_ROWS}이 필요합니다 (n={problem.n})")


def _best_split_in_column(x: np.ndarray, z: np.ndarray, w: np.ndarray,
                          min_leaf_weight: float) -> Optional[Tuple[float, float]]:
    """한 열에서 SSE 감소량이 가장 큰 (감소량, 임계값). 동률이면 가장 작은 임계값"""
    if x.size < 2:
        return None
    order = np.argsort(x, kind="stable")
    xs, zs, ws = x[order], z[order], w[order]
    left_w = np.cumsum(ws)[:-1]
    left_wz = np.cumsum(ws * zs)[:-1]
    total_w, total_wz = float(np.sum(ws)), float(np.sum(ws * zs))
    right_w = total_w - left_w
    right_wz = total_wz - left_wz

    valid = (xs[:-1] < xs[1:]) & (left_w >= min_leaf_weight) & (right_w >= min_leaf_weight)
    if not np.any(valid):
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        gain = left_wz ** 2 / left_w + right_wz ** 2 / right_w - total_wz ** 2 / total_w
    gain = np.where(valid, gain, -np.inf)
    best = gain.max()
    position = int(np.flatnonzero(gain >= best - TIE_RTOL * abs(best))[0])
    return float(gain[position]), float((xs[position] + xs[position + 1]) / 2.0)


class WeightedRegressionTree:
    """
    가중 제곱오차 CART

    분할 후보는 정렬된 고유값의 중간점입니다. 동률은 열 번호가 작은 쪽,
    그다음 임계값이 작은 쪽을 고릅니다. x ≤ 임계값이면 왼쪽 자식입니다.
    """

    def __init__(self, max_depth: int = 4, min_leaf_weight_fraction: float = 0.05):
        self.max_depth = max_depth
        self.min_leaf_weight_fraction = min_leaf_weight_fraction
        self.feature: List[int] = []
        self.threshold: List[float] = []
        self.left: List[int] = []
        self.right: List[int] = []
        self.value: List[float] = []
        self.depth = 0

    def fit(self, features: np.ndarray, response: np.ndarray, weight: np.ndarray) -> "WeightedRegressionTree":
        min_leaf_weight = self.min_leaf_weight_fraction * float(np.sum(weight))
        self._grow(features, response, weight, depth=0, min_leaf_weight=min_leaf_weight)
        return self

    def _new_node(self, value: float) -> int:
        self.feature.append(LEAF)
        self.threshold.append(np.nan)
        self.left.append(LEAF)
        self.right.append(LEAF)
        self.value.append(value)
        return len(self.value) - 1

    def _grow(self, x: np.ndarray, z: np.ndarray, w: np.ndarray, depth: int, min_leaf_weight: float) -> int:
        node = self._new_node(float(np.sum(w * z) / np.sum(w)))
        self.depth = max(self.depth, depth)
        if depth >= self.max_depth or np.ptp(z) == 0:
            return node

        best: Optional[Tuple[float, int, float]] = None
        for column in range(x.shape[1]):
            found = _best_split_in_column(x[:, column], z, w, min_leaf_weight)
            if found is None:
                continue
            gain, threshold = found
            if best is None or gain > best[0] + TIE_RTOL * abs(best[0]):
                best = (gain, column, threshold)

        node_sse = float(np.sum(w * (z - self.value[node]) ** 2))
        if best is None or best[0] <= TIE_RTOL * node_sse:
            return node

        _, column, threshold = best
        goes_left = x[:, column] <= threshold
        self.feature[node] = column
        self.threshold[node] = threshold
        self.left[node] = self._grow(x[goes_left], z[goes_left], w[goes_left], depth + 1, min_leaf_weight)
        self.right[node] = self._grow(x[~goes_left], z[~goes_left], w[~goes_left], depth + 1, min_leaf_weight)
        return node

    @property
    def n_leaves(self) -> int:
        return sum(1 for f in self.feature if f == LEAF)

    def predict(self, features: np.ndarray) -> np.ndarray:
        feature = np.asarray(self.feature)
        threshold = np.asarray(self.threshold)
        left, right = np.asarray(self.left), np.asarray(self.right)
        nodes = np.zeros(features.shape[0], dtype=int)
        active = feature[nodes] != LEAF
        while np.any(active):
            idx = np.flatnonzero(active)
            current = nodes[idx]
            goes_left = features[idx, feature[current]] <= threshold[current]
            nodes[idx] = np.where(goes_left, left[current], right[current])
            active = feature[nodes] != LEAF
        return np.asarray(self.value)[nodes]


def fit_tree(
    problem: RegressionProblem,
    max_depth: int = 4,
    min_leaf_weight_fraction: float = 0.05,
    rng_seed: Optional[int] = 0,
) -> LearnerModel:
    """
    CART 회귀나무

    모든 (열, 중간점) 쌍에서 가중 SSE 감소량을 최대화하며, 잎은 가중평균을 예측합니다.
    깊이, 잎 가중치 비율, 또는 개선 불가 시 분할을 멈춥니다.
    결정적 알고리즘이므로 rng_seed는 쓰지 않습니다.
    """
    _check_rows(problem, "tree")
    hyperparameters = {"max_depth": max_depth, "min_leaf_weight_fraction": min_leaf_weight_fraction}
    tree = WeightedRegressionTree(max_depth, min_leaf_weight_fraction).fit(
        problem.features, problem.response, problem.weight
    )
    logger.debug(f"회귀나무 적합 완료: n={problem.n}, leaves={tree.n_leaves}, depth={tree.depth}")
    return LearnerModel(
        kind="tree",
        estimator=tree,
        fitted_params={"n_leaves": tree.n_leaves, "depth": tree.depth},
        hyperparameters=hyperparameters,
    )


def fit_random_forest(
    problem: RegressionProblem,
    n_trees: int = 200,
    mtry: Optional[int] = None,
    min_leaf_weight_fraction: float = 0.01,
    bootstrap: bool = True,
    rng_seed: Optional[int] = 0,
    n_jobs: int = 1,
) -> LearnerModel:
    """
    랜덤포레스트 (가중치는 붓스트랩 재표본에도 반영)

    Args:
        problem: 가중 회귀 문제
        n_trees: 나무 수
        mtry: 분할마다 고려할 열 수 (기본 ceil(p/3))
        min_leaf_weight_fraction: 잎의 최소 가중치 비율
        bootstrap: 붓스트랩 여부
        rng_seed: 난수 시드 (같은 시드면 n_jobs와 무관하게 같은 예측)
        n_jobs: 나무 적합 병렬 수
    """
    _check_rows(problem, "random_forest")
    mtry = mtry or max(1, math.ceil(problem.p / 3))
    hyperparameters = {
        "n_trees": n_trees,
        "mtry": mtry,
        "min_leaf_weight_fraction": min_leaf_weight_fraction,
        "bootstrap": bootstrap,
    }
    forest = RandomForestRegressor(
        n_estimators=n_trees,
        criterion="squared_error",
        max_features=mtry,
        min_weight_fraction_leaf=min_leaf_weight_fraction,
        bootstrap=bootstrap,
        random_state=derive_seed(rng_seed or 0),
        n_jobs=n_jobs,
    )
    forest.fit(problem.features, problem.response, sample_weight=problem.weight)
    logger.debug(f"랜덤포레스트 적합 완료: n={problem.n}, trees={n_trees}, mtry={mtry}")
    return LearnerModel(kind="random_forest", estimator=forest, hyperparameters=hyperparameters)
