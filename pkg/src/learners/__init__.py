# Augmentation learners
from src.learners.problem import LearnerModel, RegressionProblem, make_problem, fit_zero
from src.learners.linear import fit_linear, fit_spline_additive
from src.learners.trees import fit_tree, fit_random_forest
from src.learners.super_learner import SuperLearnerModel, fit_super_learner
from src.learners.registry import (
    DEFAULT_CANDIDATES,
    LEARNER_KINDS,
    LearnerConfig,
    fit_learner,
)

__all__ = [
    "LearnerModel",
    "RegressionProblem",
    "make_problem",
    "fit_zero",
    "fit_linear",
    "fit_spline_additive",
    "fit_tree",
    "fit_random_forest",
    "SuperLearnerModel",
    "fit_super_learner",
    "DEFAULT_CANDIDATES",
    "LEARNER_KINDS",
    "LearnerConfig",
    "fit_learner",
]
