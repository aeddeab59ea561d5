"""Fold plans, cross-validated risk, the discrete super learner and cross-fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .models import PROB_CLIP, FittedModel, _as_matrix, fit
from .specs import BINOMIAL, LearnerSpec, SuperLearnerSpec


def default_folds(n: int) -> int:
    """K = 10, reduced to n // 20 for small samples (never below 2)."""
    return int(max(2, min(10, n // 20)))


def seed_rng(seed: int, stream: Sequence[int] = ()) -> np.random.Generator:
    """Generator for an independent substream of ``seed`` keyed by ``stream``."""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(stream)))


@dataclass(frozen=True)
class CrossFitPlan:
    """Assignment of n units to K folds.

    ``seed`` and ``stream`` identify the substream the permutation came
    from; nested plans derive their own substreams from them.
    """

    folds: np.ndarray
    n_folds: int
    seed: int = 0
    stream: tuple = ()

    def __post_init__(self):
        folds = np.asarray(self.folds, dtype=np.int64)
        object.__setattr__(self, "folds", folds)
        folds.setflags(write=False)
        if self.n_folds < 2:
            raise ValueError("a cross-fit plan needs K >= 2 folds")
        if folds.size and (folds.min() < 0 or folds.max() >= self.n_folds):
            raise ValueError("fold labels must lie in 0..K-1")

    @classmethod
    def random(cls, n: int, n_folds: int, seed: int = 0, stream: Sequence[int] = ()) -> "CrossFitPlan":
        if n_folds > n:
            raise ValueError(f"cannot split {n} units into {n_folds} folds")
        perm = seed_rng(seed, stream).permutation(n)
        folds = np.empty(n, dtype=np.int64)
        folds[perm] = np.arange(n) % n_folds
        return cls(folds, int(n_folds), int(seed), tuple(stream))

    @classmethod
    def from_folds(cls, folds: Sequence[int]) -> "CrossFitPlan":
        folds = np.asarray(folds, dtype=np.int64)
        labels = np.unique(folds)
        remap = np.searchsorted(labels, folds)
        return cls(remap, int(labels.size))

    @property
    def n(self) -> int:
        return self.folds.size

    def split(self, k: int) -> tuple[np.ndarray, np.ndarray]:
        test = self.folds == k
        return np.flatnonzero(~test), np.flatnonzero(test)

    def child(self, *stream: int) -> tuple[int, tuple]:
        return self.seed, self.stream + tuple(stream)


def pointwise_loss(y: np.ndarray, pred: np.ndarray, family: str) -> np.ndarray:
    if family == BINOMIAL:
        p = np.clip(pred, PROB_CLIP, 1 - PROB_CLIP)
        return -(y * np.log(p) + (1 - y) * np.log1p(-p))
    return (y - pred) ** 2


def _check_plan(plan: CrossFitPlan, n: int) -> None:
    if plan.n != n:
        raise ValueError(f"plan covers {plan.n} units but data has {n}")
    for k in range(plan.n_folds):
        train, test = plan.split(k)
        if test.size == 0 or train.size == 0:
            raise ValueError(f"fold {k} leaves an empty training or held-out set")


def cv_risk(spec: LearnerSpec, X, y, family: str, plan: CrossFitPlan, feature_names=None) -> float:
    """Mean held-out loss over all units under the plan's folds."""
    arr, names = _as_matrix(X, feature_names)
    y = np.asarray(y, dtype=float)
    _check_plan(plan, y.size)
    pred = np.empty(y.size)
    for k in range(plan.n_folds):
        train, test = plan.split(k)
        model = fit(spec, arr[train], y[train], family, names)
        pred[test] = model.predict(arr[test])
    return float(np.mean(pointwise_loss(y, pred, family)))


def discrete_super_learner(
    sl: SuperLearnerSpec, X, y, family: str, plan: CrossFitPlan | None = None, feature_names=None
) -> FittedModel:
    """Refit, on all rows, the library member with the smallest CV risk.

    Ties go to the earliest member in library order.
    """
    arr, names = _as_matrix(X, feature_names)
    y = np.asarray(y, dtype=float)
    if plan is None:
        plan = CrossFitPlan.random(y.size, min(sl.folds, y.size))
    risks = [cv_risk(spec, arr, y, family, plan, names) for spec in sl.library]
    best = int(np.argmin(risks))
    model = fit(sl.library[best], arr, y, family, names)
    model.meta["cv_risks"] = {s.name: r for s, r in zip(sl.library, risks)}
    model.meta["selected"] = sl.library[best].name
    return model


def fit_learner(
    learner: LearnerSpec | SuperLearnerSpec,
    X,
    y,
    family: str,
    plan: CrossFitPlan | None = None,
    feature_names=None,
) -> FittedModel:
    """Fit a single spec, or run the super learner when given one."""
    if isinstance(learner, SuperLearnerSpec):
        arr, names = _as_matrix(X, feature_names)
        n = arr.shape[0]
        if plan is None or plan.n != n:
            seed, stream = (0, ()) if plan is None else plan.child(99)
            plan = CrossFitPlan.random(n, max(2, min(learner.folds, n)), seed, stream)
        return discrete_super_learner(learner, arr, y, family, plan, names)
    return fit(learner, X, y, family, feature_names)


@dataclass
class CrossFitResult:
    """Out-of-fold predictions at the observed rows and at counterfactual rows."""

    pred: np.ndarray
    counterfactual: list = field(default_factory=list)
    selected: list = field(default_factory=list)
    cv_risks: dict = field(default_factory=dict)


def cross_fit(
    learner: LearnerSpec | SuperLearnerSpec,
    X,
    y,
    family: str,
    plan: CrossFitPlan,
    counterfactuals: Sequence = (),
    feature_names=None,
) -> CrossFitResult:
    """Cross-fitted predictions; unit i is always predicted by a model that
    never saw i's fold, including at its counterfactual rows.
    """
    arr, names = _as_matrix(X, feature_names)
    alts = [_as_matrix(Xc, names)[0] for Xc in counterfactuals]
    y = np.asarray(y, dtype=float)
    n = y.size
    _check_plan(plan, n)
    for a in alts:
        if a.shape != arr.shape:
            raise ValueError("counterfactual design must match the observed design shape")

    if isinstance(learner, SuperLearnerSpec) and not learner.nested:
        return _shared_fold_super_learner(learner, arr, y, family, plan, alts, names)

    pred = np.empty(n)
    cf = [np.empty(n) for _ in alts]
    selected = []
    for k in range(plan.n_folds):
        train, test = plan.split(k)
        if isinstance(learner, SuperLearnerSpec):
            n_tr = train.size
            inner = CrossFitPlan.random(n_tr, max(2, min(learner.folds, n_tr)), *plan.child(k))
            model = discrete_super_learner(learner, arr[train], y[train], family, inner, names)
            selected.append(model.meta["selected"])
        else:
            model = fit(learner, arr[train], y[train], family, names)
            selected.append(learner.name)
        pred[test] = model.predict(arr[test])
        for out, a in zip(cf, alts):
            out[test] = model.predict(a[test])
    risk = float(np.mean(pointwise_loss(y, pred, family)))
    return CrossFitResult(pred, cf, selected, {getattr(learner, "name", "learner"): risk})


def _shared_fold_super_learner(sl, arr, y, family, plan, alts, names) -> CrossFitResult:
    n = y.size
    L = len(sl.library)
    pred = np.empty((L, n))
    cf = np.empty((L, len(alts), n))
    for k in range(plan.n_folds):
        train, test = plan.split(k)
        for j, spec in enumerate(sl.library):
            model = fit(spec, arr[train], y[train], family, names)
            pred[j, test] = model.predict(arr[test])
            for c, a in enumerate(alts):
                cf[j, c, test] = model.predict(a[test])
    risks = np.array([np.mean(pointwise_loss(y, pred[j], family)) for j in range(L)])
    best = int(np.argmin(risks))
    return CrossFitResult(
        pred[best].copy(),
        [cf[best, c].copy() for c in range(len(alts))],
        [sl.library[best].name] * plan.n_folds,
        {s.name: float(r) for s, r in zip(sl.library, risks)},
    )


def cross_fit_predict(
    learner: LearnerSpec | SuperLearnerSpec, X, y, family: str, plan: CrossFitPlan, feature_names=None
) -> np.ndarray:
    return cross_fit(learner, X, y, family, plan, feature_names=feature_names).pred
