"""DR-learner for a single decision point.

Outcome and propensity regressions feed the AIPW pseudo-outcome, whose
regression on the rule covariates V estimates the blip B(V) =
E[Y_1 - Y_0 | V]. The rule treats where the blip has the favourable sign.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .config import LearnerConfig
from .data import DataError, LongitudinalDataset, history_at
from .learners import (
    BINOMIAL,
    SQUARED,
    CrossFitPlan,
    LinearModel,
    cross_fit,
    default_folds,
)
from .learners.crossfit import fit_learner
from .rules import BlipStage, Direction, LearnedBlipRule, assign_from_blip

NEAR_ZERO_BLIP = 1e-3


class PositivityError(DataError):
    """A cross-fitting training split lacks one of the treatment arms."""


@dataclass
class NuisanceEstimates:
    """Cross-fitted Q_t(H_t, a) for a in {1, 0, observed} and clipped g_t.

    ``p_raw`` is the unclipped P(A_t = 1 | H_t); ``g`` the clipped probability
    of the treatment actually received.
    """

    q1: np.ndarray
    q0: np.ndarray
    qa: np.ndarray
    g: np.ndarray
    p_raw: np.ndarray
    clipped: np.ndarray
    selected: dict = field(default_factory=dict)


def stage_plan(n: int, folds: int | None, seed: int, t: int) -> CrossFitPlan:
    """Fresh folds for time point t, drawn from the master seed's t-th substream."""
    k = folds if folds is not None else default_folds(n)
    return CrossFitPlan.random(n, min(k, n), seed, (t,))


def _check_arms(a: np.ndarray, plan: CrossFitPlan, t: int) -> None:
    for k in range(plan.n_folds):
        train, _ = plan.split(k)
        n1 = int(a[train].sum())
        if n1 == 0 or n1 == train.size:
            raise PositivityError(
                f"time {t}: training split for fold {k} has {n1} treated of {train.size} units; "
                "both arms are required in every fold"
            )


def estimate_nuisances(
    data: LongitudinalDataset,
    t: int,
    target: np.ndarray | None = None,
    learners: LearnerConfig | None = None,
    plan: CrossFitPlan | None = None,
    seed: int = 0,
) -> NuisanceEstimates:
    """Cross-fit the outcome regression of ``target`` on (H_t, A_t) and the
    propensity of A_t on H_t.

    The outcome model is predicted at A_t forced to 1 and to 0 with the same
    held-out fold model, and Q at the observed A_t is read off those two.
    """
    learners = learners or LearnerConfig()
    hist = list(history_at(data, t).columns)
    a_name = data.treatments[t - 1]
    a = data.treatment(t)
    target = data.y if target is None else np.asarray(target, dtype=float)
    if plan is None:
        plan = stage_plan(data.n_units, learners.folds, seed, t)
    _check_arms(a, plan, t)

    names = hist + [a_name]
    X = data.matrix(names)
    X1 = X.copy()
    X1[:, -1] = 1.0
    X0 = X.copy()
    X0[:, -1] = 0.0
    out = cross_fit(learners.outcome, X, target, SQUARED, plan, [X1, X0], names)
    q1, q0 = out.counterfactual
    qa = np.where(a == 1, q1, q0)

    prop = cross_fit(learners.propensity, data.matrix(hist), a, BINOMIAL, plan, feature_names=hist)
    p_raw = prop.pred
    g_raw = a * p_raw + (1 - a) * (1 - p_raw)
    g = np.clip(g_raw, learners.g_min, 1 - learners.g_min)
    return NuisanceEstimates(
        q1=q1,
        q0=q0,
        qa=qa,
        g=g,
        p_raw=p_raw,
        clipped=g != g_raw,
        selected={"outcome": out.selected, "propensity": prop.selected},
    )


def _aipw(resid, a, g, q1, q0):
    return (2 * a - 1) / g * resid + (q1 - q0)


def aipw_transform(y, nuis: NuisanceEstimates, a) -> np.ndarray:
    """D = (2A - 1) / g * (Y - Q(H, A)) + Q(H, 1) - Q(H, 0), per unit."""
    y = np.asarray(y, dtype=float)
    a = np.asarray(a, dtype=float)
    d = _aipw(y - nuis.qa, a, nuis.g, nuis.q1, nuis.q0)
    if not np.all(np.isfinite(d)):
        raise ValueError("non-finite pseudo-outcome")
    return d


def fit_blip(
    dvec: np.ndarray,
    data: LongitudinalDataset,
    columns: Sequence[str],
    learner,
    plan: CrossFitPlan,
    crossfit: bool = True,
):
    """Regress the pseudo-outcome on V.

    Returns the full-data blip model and the blip at each training unit;
    with ``crossfit`` the latter comes from models that excluded the unit's fold.
    """
    columns = list(columns)
    V = data.matrix(columns)
    model = fit_learner(learner, V, dvec, SQUARED, plan, columns)
    if crossfit:
        blip = cross_fit(learner, V, dvec, SQUARED, plan, feature_names=columns).pred
    else:
        blip = model.predict(V)
    return model, blip


@dataclass(frozen=True)
class FittedODTRStage(BlipStage):
    """Learned rule for one time point.

    ``blip_train``/``assignment`` hold the (cross-fitted) blip and rule at the
    training units; ``model`` applies the rule to new data.
    """

    direction: Direction = Direction.MAXIMIZE
    blip_train: np.ndarray | None = field(default=None, compare=False, repr=False)
    assignment: np.ndarray | None = field(default=None, compare=False, repr=False)
    pseudo_outcome: np.ndarray | None = field(default=None, compare=False, repr=False)
    nuisances: NuisanceEstimates | None = field(default=None, compare=False, repr=False)

    def as_rule(self) -> LearnedBlipRule:
        return LearnedBlipRule((self,), self.direction)


def _retained_features(model) -> list[str] | None:
    if not isinstance(model, LinearModel):
        return None
    names = list(model.feature_names)
    return [c for c, b in zip(names, model.coef[: len(names)]) if b != 0.0]


def fit_stage(
    data: LongitudinalDataset,
    t: int,
    nuis: NuisanceEstimates,
    dvec: np.ndarray,
    columns: Sequence[str],
    learners: LearnerConfig,
    direction: Direction,
    plan: CrossFitPlan,
) -> FittedODTRStage:
    hist = set(history_at(data, t).columns)
    absent = [c for c in columns if c not in hist]
    if absent:
        raise DataError(f"rule covariate(s) {absent} not in the history at time {t}")
    model, blip = fit_blip(dvec, data, columns, learners.blip, plan, learners.crossfit_blip)
    assignment = assign_from_blip(blip, direction)
    diagnostics = {
        "fraction_assigned_1": float(assignment.mean()),
        "mean_blip": float(blip.mean()),
        "fraction_near_zero_blip": float(np.mean(np.abs(blip) < NEAR_ZERO_BLIP)),
        "g_clipped_fraction": float(nuis.clipped.mean()),
        "blip_learner": model.meta.get("selected", model.learner),
        "retained_features": _retained_features(model),
        "outcome_learners": sorted(set(nuis.selected.get("outcome", []))),
        "propensity_learners": sorted(set(nuis.selected.get("propensity", []))),
    }
    return FittedODTRStage(
        t=t,
        columns=tuple(columns),
        model=model,
        diagnostics=diagnostics,
        direction=Direction.parse(direction),
        blip_train=blip,
        assignment=assignment,
        pseudo_outcome=dvec,
        nuisances=nuis,
    )


def learn_odtr_single(
    data: LongitudinalDataset,
    columns: Sequence[str],
    learners: LearnerConfig | None = None,
    direction: Direction | str = Direction.MAXIMIZE,
    plan: CrossFitPlan | None = None,
    seed: int = 0,
    t: int | None = None,
) -> FittedODTRStage:
    """Learn d_opt(V) = I(B(V) > 0) (or < 0 to minimize) at time ``t``
    (default: the last time point) against the observed outcome.
    """
    learners = learners or LearnerConfig()
    direction = Direction.parse(direction)
    t = data.tau if t is None else t
    if plan is None:
        plan = stage_plan(data.n_units, learners.folds, seed, t)
    nuis = estimate_nuisances(data, t, data.y, learners, plan)
    dvec = aipw_transform(data.y, nuis, data.treatment(t))
    return fit_stage(data, t, nuis, dvec, columns, learners, direction, plan)
