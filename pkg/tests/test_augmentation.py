"""증강 추정 엔진 테스트"""

import numpy as np
import pytest

from src.augmentation import (
    CrossFitPlan,
    augment_cross_fit,
    augment_no_split,
    confidence_interval,
    make_plan,
)
from src.errors import MeasureError, PlanError
from src.learners import LearnerConfig
from src.survival.dataset import TrialDataset
from src.survival.measures import EffectMeasureSpec, analytic_influence

LOG_HR = EffectMeasureSpec("log_hr")
SURV = EffectMeasureSpec("surv_diff", tau=1.5)
MEAN = EffectMeasureSpec("mean_diff")


@pytest.fixture
def plan200(sim200) -> CrossFitPlan:
    return make_plan(sim200.n, sim200.treatment, sim200.event, k=5, rng_seed=77)


class TestConfidenceInterval:
    def test_standard_normal(self):
        low, high = confidence_interval(0.0, 1.0)
        assert low == pytest.approx(-1.959964, abs=1e-6)
        assert high == pytest.approx(1.959964, abs=1e-6)

    def test_log_hr_example(self):
        low, high = confidence_interval(-0.385, 0.121)
        assert low == pytest.approx(-0.6222, abs=1e-4)
        assert high == pytest.approx(-0.1478, abs=1e-4)

    def test_width_grows_with_level(self):
        widths = [np.diff(confidence_interval(1.0, 0.5, level))[0] for level in (0.8, 0.9, 0.95, 0.99)]
        assert np.all(np.diff(widths) > 0)

    @pytest.mark.parametrize("se, level", [(0.0, 0.95), (-1.0, 0.95), (1.0, 1.0), (1.0, 0.0)])
    def test_rejects_bad_input(self, se, level):
        with pytest.raises(MeasureError):
            confidence_interval(0.0, se, level)


class TestMakePlan:
    def test_same_seed_same_plan(self, sim200):
        first = make_plan(sim200.n, sim200.treatment, sim200.event, k=5, rng_seed=3)
        second = make_plan(sim200.n, sim200.treatment, sim200.event, k=5, rng_seed=3)
        assert first.assignment.tolist() == second.assignment.tolist()

    def test_every_fold_has_both_arms_with_events(self, plan200, sim200):
        assert set(plan200.assignment.tolist()) == {1, 2, 3, 4, 5}
        for held_idx, train_idx in plan200.folds():
            assert held_idx.size + train_idx.size == sim200.n
            for arm in (0, 1):
                in_arm = sim200.treatment[held_idx] == arm
                assert np.any(in_arm)
                assert np.any(sim200.event[held_idx][in_arm] == 1)

    def test_too_few_subjects(self):
        with pytest.raises(PlanError, match="cross-fit plan infeasible"):
            make_plan(19, np.tile([0, 1], 10)[:19], np.ones(19), k=5)

    def test_too_few_events(self):
        treatment = np.tile([0, 1], 20)
        event = np.zeros(40, dtype=int)
        event[[0, 1, 2]] = 1
        with pytest.raises(PlanError, match="cross-fit plan infeasible"):
            make_plan(40, treatment, event, k=5, rng_seed=1)

    def test_rejects_empty_fold(self):
        with pytest.raises(PlanError):
            CrossFitPlan(k=3, assignment=[1, 1, 2, 2])

    def test_from_assignment(self):
        plan = CrossFitPlan.from_assignment([2, 1, 3, 1, 2, 3])
        assert plan.k == 3
        assert [held.tolist() for held, _ in plan.folds()] == [[1, 3], [0, 4], [2, 5]]


class TestNoSplit:
    @pytest.mark.parametrize("spec", [LOG_HR, SURV], ids=lambda s: s.id)
    def test_zero_learner_reproduces_unadjusted(self, spec, sim200):
        report = augment_no_split(sim200, spec, "zero")
        assert report.augmented.point == report.unadjusted.point
        assert report.augmented.se == report.unadjusted.se
        assert report.unadjusted.se == pytest.approx(analytic_influence(spec, sim200).se, rel=1e-12)

    def test_constant_augmentation_vanishes_in_balanced_trial(self, balanced_uncensored):
        no_covariates = TrialDataset(
            covariates=np.empty((balanced_uncensored.n, 0)), treatment=balanced_uncensored.treatment,
            time=balanced_uncensored.time, event=balanced_uncensored.event, pi=0.5,
        )
        report = augment_no_split(no_covariates, MEAN, "linear")
        assert report.augmented.point == pytest.approx(report.unadjusted.point, abs=1e-12)

    @pytest.mark.parametrize("spec", [LOG_HR, SURV, EffectMeasureSpec("rmst_diff", tau=1.5)], ids=lambda s: s.id)
    def test_linear_never_worse_than_unadjusted(self, spec, sim200):
        report = augment_no_split(sim200, spec, "linear")
        assert report.augmented.se <= report.unadjusted.se + 1e-12

    def test_prognostic_covariates_reduce_se(self, sim200):
        report = augment_no_split(sim200, LOG_HR, "linear")
        assert report.augmented.se < report.unadjusted.se

    def test_report_fields(self, sim200):
        report = augment_no_split(sim200, SURV, "linear", rng_seed=9, ci_level=0.9)
        assert report.splitting is None
        assert report.seed == 9
        assert report.learner == "linear"
        assert [row.label for row in report.rows] == ["Unadjusted", "Augmented"]
        low, high = report.augmented.ci
        assert low < report.augmented.point < high

    def test_super_learner_candidate_rows(self, sim200):
        config = LearnerConfig("super_learner", candidates=("linear", "tree"))
        report = augment_no_split(sim200, LOG_HR, config, rng_seed=1)
        assert [row.label for row in report.rows] == ["Unadjusted", "linear", "tree", "Augmented"]
        assert report.learner == "super_learner(linear+tree)"


class TestCrossFit:
    def test_zero_learner_reproduces_point(self, sim200, plan200):
        report = augment_cross_fit(sim200, LOG_HR, "zero", plan200)
        unadjusted = augment_no_split(sim200, LOG_HR, "zero")
        assert report.augmented.point == unadjusted.unadjusted.point
        assert report.unadjusted.point == unadjusted.unadjusted.point
        assert report.augmented.se == report.unadjusted_cross_fit_se
        assert report.unadjusted.se == unadjusted.unadjusted.se

    def test_reproducible_for_plan(self, sim200, plan200):
        first = augment_cross_fit(sim200, SURV, "tree", plan200)
        second = augment_cross_fit(sim200, SURV, "tree", plan200, n_jobs=3)
        assert first.augmented.point == second.augmented.point
        assert first.augmented.se == second.augmented.se

    def test_fold_relabelling_invariance(self, sim200, plan200):
        relabel = np.array([0, 3, 5, 1, 4, 2])
        permuted = CrossFitPlan.from_assignment(relabel[plan200.assignment], rng_seed=plan200.rng_seed)
        original = augment_cross_fit(sim200, LOG_HR, "random_forest", plan200)
        relabelled = augment_cross_fit(sim200, LOG_HR, "random_forest", permuted)
        assert relabelled.augmented.point == original.augmented.point
        assert relabelled.augmented.se == original.augmented.se

    def test_leave_one_out_plan_is_permutation_invariant(self, balanced_uncensored):
        n = balanced_uncensored.n
        identity = CrossFitPlan.from_assignment(np.arange(1, n + 1), rng_seed=5)
        shuffled = CrossFitPlan.from_assignment(np.random.default_rng(0).permutation(n) + 1, rng_seed=5)
        first = augment_cross_fit(balanced_uncensored, MEAN, "linear", identity)
        second = augment_cross_fit(balanced_uncensored, MEAN, "linear", shuffled)
        assert second.augmented.point == pytest.approx(first.augmented.point, abs=1e-12)
        assert second.augmented.se == pytest.approx(first.augmented.se, abs=1e-12)

    def test_hyperparameters_record_folds(self, sim200, plan200):
        report = augment_cross_fit(sim200, SURV, "linear", plan200)
        assert report.hyperparameters == {"k_folds": 5}
        assert report.splitting is plan200
        assert report.seed == 77

    def test_hyperparameters_include_learner_settings(self, sim200, plan200):
        report = augment_cross_fit(sim200, SURV, LearnerConfig("tree"), plan200)
        assert report.hyperparameters == {"max_depth": 4, "min_leaf_weight_fraction": 0.05, "k_folds": 5}
        no_split = augment_no_split(sim200, SURV, LearnerConfig("tree"))
        assert {k: v for k, v in report.hyperparameters.items() if k != "k_folds"} == no_split.hyperparameters

    def test_super_learner_candidate_rows(self, sim200, plan200):
        config = LearnerConfig("super_learner", candidates=("linear", "spline_additive"))
        report = augment_cross_fit(sim200, SURV, config, plan200)
        assert [row.label for row in report.rows] == ["Unadjusted", "linear", "spline_additive", "Augmented"]

    def test_jackknife_influence_mode(self, balanced_uncensored):
        spec = EffectMeasureSpec("mean_diff", influence_mode="jackknife")
        plan = make_plan(balanced_uncensored.n, balanced_uncensored.treatment, balanced_uncensored.event,
                         k=4, rng_seed=2)
        report = augment_cross_fit(balanced_uncensored, spec, "linear", plan)
        assert np.isfinite(report.augmented.point)
        assert report.augmented.se > 0

    def test_plan_size_mismatch(self, sim200):
        plan = CrossFitPlan.from_assignment(np.tile([1, 2], 10))
        with pytest.raises(PlanError):
            augment_cross_fit(sim200, SURV, "linear", plan)
