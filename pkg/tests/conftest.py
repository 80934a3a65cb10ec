"""공용 테스트 픽스처"""

import sys
from pathlib import Path

import numpy as np
import pytest
from loguru import logger

from src.simulation.scenarios import ScenarioSpec, generate_trial
from src.survival.dataset import TrialDataset

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(autouse=True)
def quiet_logging():
    logger.remove()
    logger.add(sys.stderr, level="WARNING")
    yield


@pytest.fixture
def trial40_path() -> Path:
    return FIXTURES / "trial40.csv"


@pytest.fixture
def scenario_a() -> ScenarioSpec:
    return ScenarioSpec(scenario="A", gamma=0.5, pi=0.5, n=200)


@pytest.fixture
def sim200(scenario_a) -> TrialDataset:
    """Scenario A, γ=1/2, n=200 데이터 한 세트"""
    return generate_trial(scenario_a, 20240611)


@pytest.fixture
def balanced_uncensored() -> TrialDataset:
    """중도절단 없는 균형 데이터 (n₁ = nπ)"""
    rng = np.random.default_rng(7)
    n = 100
    covariates = rng.standard_normal((n, 2))
    treatment = np.repeat([1, 0], n // 2)
    time = np.exp(0.3 * treatment + 0.5 * covariates[:, 0] + 0.2 * rng.standard_normal(n))
    return TrialDataset(covariates=covariates, treatment=treatment, time=time, event=np.ones(n, dtype=int), pi=0.5)
