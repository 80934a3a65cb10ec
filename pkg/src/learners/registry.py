"""
학습기 레지스트리

학습기 종류 이름으로 적합 함수를 찾아 호출합니다.
"""

from dataclasses import dataclass
from functools import partial
from typing import Callable, Dict, Tuple, Union

from loguru import logger

from src.errors import LearnerError
from src.learners.linear import fit_linear, fit_spline_additive
from src.learners.problem import LearnerModel, RegressionProblem, fit_zero
from src.learners.super_learner import SuperLearnerModel, fit_super_learner
from src.learners.trees import fit_random_forest, fit_tree

BASE_LEARNERS: Dict[str, Callable[..., LearnerModel]] = {
    "zero": fit_zero,
    "linear": fit_linear,
    "spline_additive": fit_spline_additive,
    "tree": fit_tree,
    "random_forest": fit_random_forest,
}
LEARNER_KINDS = tuple(BASE_LEARNERS) + ("super_learner",)
DEFAULT_CANDIDATES = ("linear", "spline_additive", "tree", "random_forest")


@dataclass(frozen=True)
class LearnerConfig:
    """
    학습기 설정

    Args:
        kind: zero, linear, spline_additive, tree, random_forest, super_learner
        candidates: super learner 후보 종류 목록
        v_folds: super learner 내부 교차검증 fold 수
        n_jobs: 랜덤포레스트 나무 적합 병렬 수
    """
    kind: str
    candidates: Tuple[str, ...] = DEFAULT_CANDIDATES
    v_folds: int = 5
    n_jobs: int = 1

    def __post_init__(self):
        if self.kind not in LEARNER_KINDS:
            raise LearnerError(f"알 수 없는 학습기입니다: {self.kind} (허용: {', '.join(LEARNER_KINDS)})")
        object.__setattr__(self, "candidates", tuple(self.candidates))
        if self.kind == "super_learner":
            unknown = [c for c in self.candidates if c not in BASE_LEARNERS]
            if unknown:
                raise LearnerError(f"super learner 후보로 쓸 수 없는 학습기입니다: {unknown}")
            if len(self.candidates) < 2:
                raise LearnerError("super learner에는 후보가 2개 이상 필요합니다")

    @property
    def label(self) -> str:
        if self.kind == "super_learner":
            return f"super_learner({'+'.join(self.candidates)})"
        return self.kind


def _base_fitter(kind: str, n_jobs: int) -> Callable[[RegressionProblem, int], LearnerModel]:
    if kind == "random_forest":
        return partial(_call_with_seed, partial(fit_random_forest, n_jobs=n_jobs))
    return partial(_call_with_seed, BASE_LEARNERS[kind])


def _call_with_seed(fit: Callable[..., LearnerModel], problem: RegressionProblem, rng_seed: int) -> LearnerModel:
    return fit(problem, rng_seed=rng_seed)


def _candidate_names(candidates: Tuple[str, ...]) -> Tuple[str, ...]:
    # 같은 종류가 여러 번 나오면 linear, linear_2 ... 로 구분
    seen: Dict[str, int] = {}
    names = []
    for kind in candidates:
        seen[kind] = seen.get(kind, 0) + 1
        names.append(kind if seen[kind] == 1 else f"{kind}_{seen[kind]}")
    return tuple(names)


def fit_learner(
    config: Union[LearnerConfig, str],
    problem: RegressionProblem,
    rng_seed: int = 0,
) -> Union[LearnerModel, SuperLearnerModel]:
    """
    설정된 종류의 학습기를 적합합니다.

    Args:
        config: LearnerConfig 또는 학습기 종류 이름
        problem: 가중 회귀 문제
        rng_seed: 난수 시드

    Returns:
        LearnerModel 또는 SuperLearnerModel
    """
    if isinstance(config, str):
        config = LearnerConfig(kind=config)

    if config.kind == "super_learner":
        candidates = [
            (name, _base_fitter(kind, config.n_jobs))
            for name, kind in zip(_candidate_names(config.candidates), config.candidates)
        ]
        return fit_super_learner(problem, candidates, v_folds=config.v_folds, rng_seed=rng_seed)

    model = _base_fitter(config.kind, config.n_jobs)(problem, rng_seed)
    for note in model.notes:
        logger.debug(f"학습기 참고사항: kind={config.kind}, note={note}")
    return model
