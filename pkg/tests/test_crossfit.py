import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from odtr.learners import (
    BINOMIAL,
    SQUARED,
    CrossFitPlan,
    GradientBoostedTrees,
    Intercept,
    Logistic,
    PenalizedLinear,
    SuperLearnerSpec,
    cross_fit,
    cross_fit_predict,
    cv_risk,
    default_folds,
    discrete_super_learner,
)


def test_two_fold_means():
    plan = CrossFitPlan.from_folds([0, 0, 1, 1])
    pred = cross_fit_predict(Intercept(), np.zeros((4, 1)), [0.0, 0.0, 2.0, 2.0], SQUARED, plan)
    np.testing.assert_array_equal(pred, [2.0, 2.0, 0.0, 0.0])


def test_leave_one_out_means():
    plan = CrossFitPlan.from_folds([0, 1, 2])
    pred = cross_fit_predict(Intercept(), np.zeros((3, 1)), [1.0, 2.0, 3.0], SQUARED, plan)
    np.testing.assert_allclose(pred, [2.5, 2.0, 1.5])


def test_cv_risk_hand_example():
    plan = CrossFitPlan.from_folds([0, 1])
    assert cv_risk(Intercept(), np.zeros((2, 1)), [0.0, 2.0], SQUARED, plan) == 4.0


def test_cv_risk_constant_target_is_zero():
    plan = CrossFitPlan.random(30, 5, seed=1)
    assert cv_risk(Intercept(), np.zeros((30, 1)), np.full(30, 3.3), SQUARED, plan) == 0.0


def test_plan_must_leave_training_rows():
    with pytest.raises(ValueError):
        CrossFitPlan.random(3, 4)
    with pytest.raises(ValueError, match="covers"):
        cv_risk(Intercept(), np.zeros((3, 1)), [1.0, 2.0, 3.0], SQUARED, CrossFitPlan.from_folds([0, 1]))


@given(n=st.integers(2, 300), k=st.integers(2, 12), seed=st.integers(0, 2**31))
def test_plan_balanced_partition(n, k, seed):
    k = min(k, n)
    plan = CrossFitPlan.random(n, k, seed)
    sizes = np.bincount(plan.folds, minlength=k)
    assert sizes.sum() == n and sizes.max() - sizes.min() <= 1
    assert np.array_equal(plan.folds, CrossFitPlan.random(n, k, seed).folds)


def test_default_folds():
    assert default_folds(40) == 2
    assert default_folds(100) == 5
    assert default_folds(10_000) == 10
    assert default_folds(5) == 2


def test_counterfactual_rows_use_held_out_model():
    rng = np.random.default_rng(0)
    X = rng.normal(size=(40, 2))
    y = X[:, 0] + rng.normal(size=40)
    plan = CrossFitPlan.random(40, 4, seed=3)
    Xc = X.copy()
    Xc[:, 1] = 0.0
    out = cross_fit(PenalizedLinear(lam=0.0, penalty="ridge"), X, y, SQUARED, plan, [Xc])
    for k in range(4):
        train, test = plan.split(k)
        D = np.column_stack([np.ones(train.size), X[train]])
        beta = np.linalg.lstsq(D, y[train], rcond=None)[0]
        np.testing.assert_allclose(out.counterfactual[0][test], np.column_stack([np.ones(test.size), Xc[test]]) @ beta)


def test_fold_order_invariance():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(60, 2))
    y = rng.normal(size=60)
    folds = np.arange(60) % 3
    relabel = np.array([2, 0, 1])[folds]
    spec = GradientBoostedTrees(num_trees=5)
    a = cross_fit_predict(spec, X, y, SQUARED, CrossFitPlan.from_folds(folds))
    b = cross_fit_predict(spec, X, y, SQUARED, CrossFitPlan.from_folds(relabel))
    np.testing.assert_array_equal(a, b)


def test_super_learner_singleton_and_ties():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(50, 2))
    y = X[:, 0] + rng.normal(size=50)
    m = discrete_super_learner(SuperLearnerSpec((Intercept(),)), X, y, SQUARED)
    assert m.kind == "intercept"
    twins = SuperLearnerSpec((PenalizedLinear(lam=0.01), PenalizedLinear(lam=0.01), Intercept()))
    m = discrete_super_learner(twins, X, y, SQUARED, CrossFitPlan.random(50, 5, 0))
    assert m.meta["selected"] == twins.library[0].name
    res = cross_fit(twins, X, y, SQUARED, CrossFitPlan.random(50, 5, 0))
    assert set(res.selected) == {twins.library[0].name}


@given(seed=st.integers(0, 1000))
def test_super_learner_is_argmin(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(80, 2))
    y = np.sin(2 * X[:, 0]) + rng.normal(scale=0.5, size=80)
    lib = (Intercept(), PenalizedLinear(lam=0.05), GradientBoostedTrees(num_trees=10))
    plan = CrossFitPlan.random(80, 4, seed)
    m = discrete_super_learner(SuperLearnerSpec(lib), X, y, SQUARED, plan)
    risks = [cv_risk(s, X, y, SQUARED, plan) for s in lib]
    assert m.meta["selected"] == lib[int(np.argmin(risks))].name
    assert min(m.meta["cv_risks"].values()) == min(risks) >= 0


def test_binomial_risk_and_super_learner():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(400, 2))
    a = (rng.random(400) < 1 / (1 + np.exp(-2 * X[:, 0]))).astype(float)
    plan = CrossFitPlan.random(400, 5, 1)
    sl = SuperLearnerSpec((Intercept(), Logistic(lam=0.0)))
    res = cross_fit(sl, X, a, BINOMIAL, plan)
    assert set(res.selected) == {"logistic(lambda=0)"}
    assert np.all((res.pred > 0) & (res.pred < 1))


def test_nested_super_learner_is_deterministic():
    rng = np.random.default_rng(4)
    X = rng.normal(size=(100, 2))
    y = X[:, 0] + rng.normal(size=100)
    sl = SuperLearnerSpec((Intercept(), PenalizedLinear(lam=0.01)), folds=3, nested=True)
    plan = CrossFitPlan.random(100, 4, seed=5)
    a = cross_fit(sl, X, y, SQUARED, plan)
    b = cross_fit(sl, X, y, SQUARED, plan)
    np.testing.assert_array_equal(a.pred, b.pred)
    assert len(a.selected) == 4
