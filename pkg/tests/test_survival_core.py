"""생존분석 기본 연산 테스트"""

import numpy as np
import pytest
from lifelines import CoxPHFitter, KaplanMeierFitter, NelsonAalenFitter
from lifelines.utils import restricted_mean_survival_time
import pandas as pd

from src.errors import DatasetError, DegenerateLikelihoodError, SurvivalError
from src.simulation.scenarios import ScenarioSpec, generate_trial
from src.survival.core import StepFunction, cox_unadjusted, greenwood_variance, kaplan_meier, nelson_aalen, rmst
from src.survival.dataset import TrialDataset


def _random_sample(seed: int, n: int = 60):
    rng = np.random.default_rng(seed)
    event_time = rng.exponential(2.0, n)
    censor_time = rng.uniform(0.5, 5.0, n)
    return np.minimum(event_time, censor_time), (event_time <= censor_time).astype(int)


class TestKaplanMeier:
    def test_no_censoring_is_empirical_survival(self):
        km = kaplan_meier([1, 2, 3], [1, 1, 1])
        assert km(0.5) == 1.0
        assert km([1, 2, 3]) == pytest.approx([2 / 3, 1 / 3, 0.0], abs=1e-15)
        assert km(1.999) == pytest.approx(2 / 3)

    def test_censoring_keeps_value(self):
        km = kaplan_meier([1, 2, 3], [1, 0, 1])
        assert km(1) == pytest.approx(2 / 3)
        assert km(2) == pytest.approx(2 / 3)
        assert km(3) == 0.0
        assert km.jump_times.tolist() == [1.0, 3.0]

    def test_all_censored_is_constant_one(self):
        km = kaplan_meier([1, 2, 3], [0, 0, 0])
        assert km.jump_times.size == 0
        assert km(10.0) == 1.0

    def test_events_before_censorings_at_ties(self):
        # t=2에 사건 1건과 중도절단 1건: 위험집합 3, S(2) = 1 − 1/3
        km = kaplan_meier([2, 2, 4], [1, 0, 1])
        assert km(2) == pytest.approx(2 / 3)

    def test_empty_sample(self):
        with pytest.raises(SurvivalError, match="empty sample"):
            kaplan_meier([], [])

    def test_matches_lifelines(self):
        times, events = _random_sample(3)
        km = kaplan_meier(times, events)
        reference = KaplanMeierFitter().fit(times, events)
        grid = np.linspace(0.01, times.max(), 50)
        expected = reference.survival_function_at_times(grid).to_numpy()
        assert km(grid) == pytest.approx(expected, abs=1e-12)

    def test_monotone_in_unit_interval(self):
        km = kaplan_meier(*_random_sample(5))
        assert np.all(np.diff(km.values) <= 0)
        assert km.values.min() >= 0 and km.values.max() <= 1


class TestNelsonAalen:
    def test_hand_computation(self):
        na = nelson_aalen([1, 2, 3], [1, 1, 1])
        assert na([1, 2, 3]) == pytest.approx([1 / 3, 1 / 3 + 1 / 2, 1 / 3 + 1 / 2 + 1])

    def test_no_events_is_zero(self):
        assert nelson_aalen([1, 2], [0, 0])(5.0) == 0.0

    def test_single_subject(self):
        assert nelson_aalen([1], [1])(1) == 1.0

    def test_matches_lifelines(self):
        times, events = _random_sample(11)
        na = nelson_aalen(times, events)
        reference = NelsonAalenFitter(nelson_aalen_smoothing=False).fit(times, events)
        expected = reference.cumulative_hazard_.iloc[:, 0]
        at = expected.index.to_numpy()[1:]
        assert na(at) == pytest.approx(expected.to_numpy()[1:], rel=1e-10)
        assert np.all(np.diff(na.values) >= 0)


class TestRmst:
    def test_constant_one(self):
        assert rmst(StepFunction([], []), 2.0) == 2.0

    def test_two_rectangles(self):
        assert rmst(StepFunction([1.0], [0.5]), 2.0) == pytest.approx(1.5)

    def test_km_hand_integration(self):
        km = kaplan_meier([1, 2, 3], [1, 1, 1])
        assert rmst(km, 2.5) == pytest.approx(1 + 2 / 3 + 0.5 / 3, abs=1e-12)

    def test_additive_over_intervals(self):
        km = kaplan_meier(*_random_sample(17))
        assert rmst(km, 1.2) + km.area(1.2, 3.0) == pytest.approx(rmst(km, 3.0), rel=1e-13)

    def test_matches_lifelines(self):
        times, events = _random_sample(19)
        reference = KaplanMeierFitter().fit(times, events)
        assert rmst(kaplan_meier(times, events), 2.0) == pytest.approx(
            restricted_mean_survival_time(reference, t=2.0), rel=1e-6
        )

    def test_rejects_non_positive_tau(self):
        with pytest.raises(SurvivalError):
            rmst(StepFunction([], []), 0.0)


class TestStepFunction:
    def test_rejects_unsorted_jumps(self):
        with pytest.raises(SurvivalError):
            StepFunction([2.0, 1.0], [0.5, 0.2])

    def test_right_continuous(self):
        f = StepFunction([1.0, 2.0], [0.7, 0.1], initial_value=0.9)
        assert f(0.0) == 0.9
        assert f(1.0) == 0.7
        assert f(5.0) == 0.1


def test_greenwood_without_censoring_is_binomial():
    times = np.arange(1, 21, dtype=float)
    events = np.ones(20, dtype=int)
    # S(10) = 0.5 → S(1−S)/n
    assert greenwood_variance(times, events, 10.0) == pytest.approx(0.5 * 0.5 / 20, rel=1e-12)


class TestCox:
    def test_score_is_zero_at_estimate(self, sim200):
        fit = cox_unadjusted(sim200)
        assert abs(fit.score) < 1e-8 * sim200.n
        assert abs(fit.score_residuals.mean()) < 1e-8
        assert fit.information > 0

    def test_label_swap_antisymmetry(self, sim200):
        assert cox_unadjusted(sim200.swap_arms()).log_hr == pytest.approx(-cox_unadjusted(sim200).log_hr, abs=1e-8)

    def test_monotone_likelihood_is_degenerate(self):
        data = TrialDataset(covariates=np.empty((2, 0)), treatment=[1, 0], time=[1.0, 2.0], event=[1, 1], pi=0.5)
        with pytest.raises(DegenerateLikelihoodError, match="partial likelihood degenerate"):
            cox_unadjusted(data)

    def test_all_events_in_one_arm_is_degenerate(self):
        data = TrialDataset(
            covariates=np.empty((6, 0)), treatment=[1, 1, 1, 0, 0, 0],
            time=[1, 2, 3, 4, 5, 6], event=[1, 1, 1, 0, 0, 0], pi=0.5,
        )
        with pytest.raises(DegenerateLikelihoodError):
            cox_unadjusted(data)

    def test_matches_lifelines(self, sim200):
        fit = cox_unadjusted(sim200)
        frame = pd.DataFrame({"time": sim200.time, "event": sim200.event, "trt": sim200.treatment})
        reference = CoxPHFitter().fit(frame, duration_col="time", event_col="event")
        assert fit.log_hr == pytest.approx(reference.params_["trt"], rel=1e-5)
        assert 1 / np.sqrt(fit.information) == pytest.approx(reference.standard_errors_["trt"], rel=1e-5)

    def test_robust_variance_matches_lifelines(self, sim200):
        fit = cox_unadjusted(sim200)
        frame = pd.DataFrame({"time": sim200.time, "event": sim200.event, "trt": sim200.treatment})
        reference = CoxPHFitter().fit(frame, duration_col="time", event_col="event", robust=True)
        assert np.sqrt(fit.robust_variance) == pytest.approx(reference.standard_errors_["trt"], rel=1e-4)

    def test_held_out_residuals_reproduce_in_sample(self, sim200):
        fit = cox_unadjusted(sim200)
        again = fit.residuals_at(sim200.treatment, sim200.time, sim200.event)
        assert again == pytest.approx(fit.score_residuals, abs=1e-12)

    @pytest.mark.slow
    def test_huge_trial_log_hr_range(self):
        spec = ScenarioSpec(scenario="A", gamma=0.5, pi=0.5, n=1_000_000)
        assert -0.36 <= cox_unadjusted(generate_trial(spec, 1)).log_hr <= -0.34


class TestTrialDataset:
    def test_empty(self):
        with pytest.raises(DatasetError, match="empty sample"):
            TrialDataset(covariates=np.empty((0, 1)), treatment=[], time=[], event=[], pi=0.5)

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"time": [1.0, -1.0, 2.0]},
            {"treatment": [1, 2, 0]},
            {"event": [1, 0, 3]},
            {"treatment": [1, 1, 1]},
            {"event": [0, 0, 0]},
            {"pi": 1.0},
            {"covariates": [[1.0], [np.nan], [0.0]]},
        ],
    )
    def test_invariants(self, kwargs):
        base = dict(covariates=[[1.0], [2.0], [0.0]], treatment=[1, 0, 1], time=[1.0, 2.0, 3.0], event=[1, 0, 1], pi=0.5)
        base.update(kwargs)
        with pytest.raises(DatasetError):
            TrialDataset(**base)

    def test_arrays_are_read_only(self, sim200):
        with pytest.raises(ValueError):
            sim200.time[0] = 1.0
