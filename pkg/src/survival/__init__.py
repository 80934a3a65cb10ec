# Survival primitives and effect measures
from src.survival.dataset import ObservationBlock, TrialDataset
from src.survival.core import (
    StepFunction,
    kaplan_meier,
    nelson_aalen,
    rmst,
    greenwood_variance,
    cox_unadjusted,
)
from src.survival.measures import (
    EffectMeasureSpec,
    InfluenceVector,
    estimate,
    analytic_influence,
    jackknife_influence,
    influence,
    out_of_fold_influence,
)

__all__ = [
    "ObservationBlock",
    "TrialDataset",
    "StepFunction",
    "kaplan_meier",
    "nelson_aalen",
    "rmst",
    "greenwood_variance",
    "cox_unadjusted",
    "EffectMeasureSpec",
    "InfluenceVector",
    "estimate",
    "analytic_influence",
    "jackknife_influence",
    "influence",
    "out_of_fold_influence",
]
