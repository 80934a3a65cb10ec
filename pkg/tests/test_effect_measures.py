"""효과 척도 및 영향함수 테스트"""

import numpy as np
import pandas as pd
import pytest

from src.errors import JackknifeError, MeasureError
from src.survival.core import cox_unadjusted, greenwood_variance
from src.survival.dataset import TrialDataset
from src.survival.measures import (
    EffectMeasureSpec,
    analytic_influence,
    estimate,
    fit_influence_model,
    influence,
    jackknife_influence,
    out_of_fold_influence,
)

BUILTIN_SPECS = [
    EffectMeasureSpec("log_hr"),
    EffectMeasureSpec("surv_diff", tau=1.5),
    EffectMeasureSpec("rmst_diff", tau=1.5),
]


@pytest.fixture
def trial40(trial40_path) -> TrialDataset:
    frame = pd.read_csv(trial40_path)
    return TrialDataset(
        covariates=frame[["age", "nodes"]].to_numpy(float),
        treatment=frame["trt"], time=frame["time"], event=frame["status"], pi=0.5,
    )


@pytest.fixture
def uncensored200() -> TrialDataset:
    rng = np.random.default_rng(42)
    n = 200
    covariates = rng.standard_normal((n, 3))
    treatment = rng.binomial(1, 0.5, n)
    time = rng.weibull(3.0, n) * np.exp(0.5 * treatment + covariates[:, 0])
    return TrialDataset(covariates=covariates, treatment=treatment, time=time, event=np.ones(n, dtype=int), pi=0.5)


class TestEstimate:
    def test_fixture_values(self, trial40):
        assert estimate(EffectMeasureSpec("surv_diff", tau=10), trial40) == pytest.approx(0.2, abs=1e-12)
        assert estimate(EffectMeasureSpec("rmst_diff", tau=10), trial40) == pytest.approx(1.4, abs=1e-12)

    def test_identical_arms_give_zero(self):
        times = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0])
        events = np.array([1, 0, 1, 1, 0, 1])
        data = TrialDataset(
            covariates=np.zeros((12, 1)), treatment=np.repeat([1, 0], 6),
            time=np.tile(times, 2), event=np.tile(events, 2), pi=0.5,
        )
        assert estimate(EffectMeasureSpec("surv_diff", tau=4), data) == 0.0
        assert estimate(EffectMeasureSpec("rmst_diff", tau=4), data) == 0.0
        assert estimate(EffectMeasureSpec("log_hr"), data) == pytest.approx(0.0, abs=1e-10)

    def test_mean_diff_requires_uncensored(self, trial40):
        with pytest.raises(MeasureError, match="mean_diff requires uncensored data"):
            estimate(EffectMeasureSpec("mean_diff"), trial40)

    def test_tau_outside_support(self, trial40):
        with pytest.raises(MeasureError, match="tau outside support"):
            estimate(EffectMeasureSpec("rmst_diff", tau=30), trial40)

    def test_custom_estimator(self, trial40):
        spec = EffectMeasureSpec("custom", estimator=lambda d: float(d.time.mean()))
        assert estimate(spec, trial40) == pytest.approx(trial40.time.mean())


class TestSpecValidation:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"id": "surv_diff"},
            {"id": "log_hr", "tau": 2.0},
            {"id": "custom"},
            {"id": "odds_ratio"},
            {"id": "log_hr", "influence_mode": "bootstrap"},
            {"id": "custom", "estimator": len, "influence_mode": "analytic"},
        ],
    )
    def test_rejects_inconsistent_spec(self, kwargs):
        with pytest.raises(MeasureError):
            EffectMeasureSpec(**kwargs)

    def test_default_modes(self):
        assert EffectMeasureSpec("log_hr").influence_mode == "analytic"
        assert EffectMeasureSpec("custom", estimator=len).influence_mode == "jackknife"
        assert EffectMeasureSpec("custom", estimator=len, analytic=lambda t, b: b.time).influence_mode == "analytic"


class TestAnalyticInfluence:
    def test_fixture_surv_diff_se(self, trial40):
        psi = analytic_influence(EffectMeasureSpec("surv_diff", tau=10), trial40)
        assert psi.se == pytest.approx(np.sqrt(0.02), rel=1e-10)
        assert abs(psi.values.mean()) < 1e-12

    def test_mean_diff_single_subject_arms(self):
        data = TrialDataset(covariates=np.zeros((2, 1)), treatment=[1, 0], time=[3.0, 1.0], event=[1, 1], pi=0.5)
        assert analytic_influence(EffectMeasureSpec("mean_diff"), data).values.tolist() == [0.0, 0.0]

    @pytest.mark.parametrize("censored", [False, True])
    def test_surv_diff_variance_is_greenwood(self, censored):
        rng = np.random.default_rng(3)
        n = 80
        treatment = np.repeat([1, 0], n // 2)
        event_time = rng.exponential(2.0, n)
        censor_time = rng.uniform(0.5, 6.0, n) if censored else np.full(n, np.inf)
        time = np.minimum(event_time, censor_time)
        event = (event_time <= censor_time).astype(int)
        tau = 1.0
        data = TrialDataset(covariates=np.zeros((n, 1)), treatment=treatment, time=time, event=event, pi=0.5)

        psi = analytic_influence(EffectMeasureSpec("surv_diff", tau=tau), data)
        greenwood = sum(
            greenwood_variance(time[treatment == arm], event[treatment == arm], tau) for arm in (0, 1)
        )
        assert psi.variance == pytest.approx(greenwood, rel=1e-10)

    def test_log_hr_variance_is_robust_cox_variance(self, sim200):
        psi = analytic_influence(EffectMeasureSpec("log_hr"), sim200)
        assert psi.variance == pytest.approx(cox_unadjusted(sim200).robust_variance, rel=1e-8)

    @pytest.mark.parametrize("spec", BUILTIN_SPECS, ids=lambda s: s.id)
    def test_mean_is_zero(self, spec, sim200):
        values = analytic_influence(spec, sim200).values
        assert abs(values.mean()) <= 1e-6 * values.std() + 1e-12

    @pytest.mark.parametrize("spec", BUILTIN_SPECS, ids=lambda s: s.id)
    def test_arm_swap_negates_influence(self, spec, sim200):
        original = analytic_influence(spec, sim200).values
        swapped = analytic_influence(spec, sim200.swap_arms()).values
        assert swapped == pytest.approx(-original, abs=1e-6)

    @pytest.mark.parametrize("measure", ["surv_diff", "rmst_diff"])
    def test_survival_influence_ignores_covariates(self, measure, sim200):
        spec = EffectMeasureSpec(measure, tau=1.5)
        shuffled = TrialDataset(
            covariates=np.random.default_rng(0).permutation(sim200.covariates),
            treatment=sim200.treatment, time=sim200.time, event=sim200.event, pi=sim200.pi,
        )
        assert analytic_influence(spec, shuffled).values.tolist() == analytic_influence(spec, sim200).values.tolist()


class TestJackknife:
    @pytest.mark.parametrize("spec", BUILTIN_SPECS, ids=lambda s: s.id)
    def test_agrees_with_analytic(self, spec, sim200):
        analytic = analytic_influence(spec, sim200).values
        jackknife = jackknife_influence(spec, sim200, n_jobs=2).values
        assert np.corrcoef(analytic, jackknife)[0, 1] >= 0.99
        assert 0.8 <= np.sum(jackknife ** 2) / np.sum(analytic ** 2) <= 1.25

    def test_mean_diff_agrees_with_analytic(self, uncensored200):
        spec = EffectMeasureSpec("mean_diff")
        analytic = analytic_influence(spec, uncensored200).values
        jackknife = jackknife_influence(spec, uncensored200).values
        assert np.corrcoef(analytic, jackknife)[0, 1] >= 0.99

    def test_mean_diff_close_on_balanced_data(self, balanced_uncensored):
        spec = EffectMeasureSpec("mean_diff")
        analytic = analytic_influence(spec, balanced_uncensored).values
        jackknife = jackknife_influence(spec, balanced_uncensored).values
        bound = 0.5 * analytic.std() / np.sqrt(balanced_uncensored.n)
        assert np.max(np.abs(jackknife - analytic)) < bound

    def test_constant_estimator_gives_zero(self, trial40):
        spec = EffectMeasureSpec("custom", estimator=lambda d: 3.0)
        psi = jackknife_influence(spec, trial40)
        assert psi.provenance == "jackknife"
        assert np.all(psi.values == 0.0)

    def test_centred(self, sim200):
        values = jackknife_influence(EffectMeasureSpec("surv_diff", tau=1.5), sim200).values
        assert abs(values.mean()) < 1e-12

    def test_independent_of_worker_count(self, trial40):
        spec = EffectMeasureSpec("rmst_diff", tau=10)
        serial = jackknife_influence(spec, trial40, n_jobs=1).values
        parallel = jackknife_influence(spec, trial40, n_jobs=3).values
        assert serial.tolist() == parallel.tolist()

    def test_failure_names_subject(self, trial40):
        marker_time, marker_arm = trial40.time[5], trial40.treatment[5]

        def fragile(data):
            if not np.any((data.time == marker_time) & (data.treatment == marker_arm)):
                raise MeasureError("marker subject missing")
            return float(data.time.mean())

        spec = EffectMeasureSpec("custom", estimator=fragile)
        with pytest.raises(JackknifeError) as excinfo:
            jackknife_influence(spec, trial40)
        assert excinfo.value.subject_index == 5
        assert "5" in str(excinfo.value)

    def test_log_hr_variance_close_to_analytic(self, scenario_a):
        from src.simulation.scenarios import generate_trial

        data = generate_trial(scenario_a.model_copy(update={"n": 250}), 99)
        spec = EffectMeasureSpec("log_hr")
        ratio = jackknife_influence(spec, data).variance / analytic_influence(spec, data).variance
        assert ratio == pytest.approx(1.0, rel=0.20)


class TestInfluenceDispatch:
    def test_forced_jackknife(self, trial40):
        spec = EffectMeasureSpec("surv_diff", tau=10, influence_mode="jackknife")
        assert influence(spec, trial40).provenance == "jackknife"

    def test_custom_analytic(self, balanced_uncensored):
        def mean_diff(data):
            return float(data.time[data.treatment == 1].mean() - data.time[data.treatment == 0].mean())

        builtin = fit_influence_model(EffectMeasureSpec("mean_diff"), balanced_uncensored)
        spec = EffectMeasureSpec(
            "custom", estimator=mean_diff,
            analytic=lambda train, block: fit_influence_model(EffectMeasureSpec("mean_diff"), train).evaluate(block),
        )
        psi = influence(spec, balanced_uncensored)
        assert psi.provenance == "analytic"
        assert psi.values.tolist() == builtin.evaluate(balanced_uncensored.block()).tolist()


class TestOutOfFold:
    @pytest.mark.parametrize("spec", BUILTIN_SPECS, ids=lambda s: s.id)
    def test_held_out_copy_matches_in_sample(self, spec, sim200):
        in_sample = analytic_influence(spec, sim200).values
        picks = [0, 17, 123]
        held = out_of_fold_influence(spec, sim200, sim200.block(picks))
        assert held == pytest.approx(in_sample[picks], abs=1e-12)

    def test_held_out_subjects_get_finite_values(self, sim200):
        train = sim200.subset(np.arange(150))
        held = sim200.block(np.arange(150, 200))
        for spec in BUILTIN_SPECS:
            assert np.all(np.isfinite(out_of_fold_influence(spec, train, held)))

    def test_jackknife_mode_uses_add_one(self, trial40):
        spec = EffectMeasureSpec("custom", estimator=lambda d: float(d.time.sum()))
        train = trial40.subset(np.arange(30))
        held = trial40.block(np.arange(30, 40))
        values = out_of_fold_influence(spec, train, held)
        assert values == pytest.approx(train.n * trial40.time[30:40])
