"""Backward-induction DR-learner for time-varying rules.

Stages are learned from the last decision point to the first. At each stage
the outcome regression targets the prediction of the next stage's outcome
model at the learned next-stage rule, and the blip is regressed on the
sequential AIPW pseudo-outcome, which carries the weighted residuals of all
later stages for units that followed the learned rule.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .config import LearnerConfig
from .data import DataError, LongitudinalDataset, check_rule_covariates
from .learners import CrossFitPlan
from .rules import Direction, FixedAssignmentRule, LearnedBlipRule, TreatmentRule, rule_from_dict
from .single import (
    FittedODTRStage,
    NuisanceEstimates,
    _aipw,
    estimate_nuisances,
    fit_stage,
    stage_plan,
)


class StageError(RuntimeError):
    """Learning failed at a specific time point."""

    def __init__(self, t: int, cause: Exception):
        super().__init__(f"time point {t}: {cause}")
        self.t = t
        self.cause = cause


@dataclass
class StageCache:
    """Stage-t quantities needed by earlier stages' pseudo-outcomes."""

    t: int
    a: np.ndarray
    nuis: NuisanceEstimates
    assignment: np.ndarray | None = None

    @property
    def q_rule(self) -> np.ndarray:
        """Q_t(H_t, A_t = d_t(V_t))."""
        return pseudo_outcome_update(self)

    @property
    def compliance(self) -> np.ndarray:
        return (self.a == self.assignment).astype(float)


def pseudo_outcome_update(cache: StageCache) -> np.ndarray:
    """Next target for the stage t-1 outcome regression: Q_t at the learned rule."""
    if cache.assignment is None:
        raise ValueError(f"stage {cache.t} has no learned rule yet")
    return np.where(cache.assignment == 1, cache.nuis.q1, cache.nuis.q0)


def sequential_aipw_transform(
    t: int,
    caches: Mapping[int, StageCache],
    y: np.ndarray,
    weight_cap: float | None = None,
) -> tuple[np.ndarray, int]:
    """Sequential AIPW pseudo-outcome at time t.

    Evaluated through the backward recursion

        R_tau = Y - Q_tau(H_tau, A_tau)
        R_s   = Q_{s+1}(H_{s+1}, d_{s+1}) - Q_s(H_s, A_s)
                + 1(A_{s+1} = d_{s+1}) / g_{s+1} * R_{s+1}
        D_t   = (2 A_t - 1) / g_t * R_t + Q_t(H_t, 1) - Q_t(H_t, 0)

    which equals the weighted sum over s = t..tau. If any cumulative weight
    (1 / g_t) * prod_{k=t+1}^{s} 1(A_k = d_k) / g_k exceeds ``weight_cap`` the
    explicit sum with capped weights is used instead. Returns the pseudo-
    outcomes and the number of (unit, s) weights that were capped.
    """
    tau = max(caches)
    for s in range(t, tau + 1):
        if s not in caches:
            raise ValueError(f"missing stage cache for time {s}")
    y = np.asarray(y, dtype=float)
    cur = caches[t]
    n_capped = 0
    if weight_cap is not None and tau > t:
        cum = 1.0 / cur.nuis.g
        weights = [cum]
        for s in range(t + 1, tau + 1):
            cum = cum * caches[s].compliance / caches[s].nuis.g
            weights.append(cum)
        n_capped = int(sum(np.sum(w > weight_cap) for w in weights))
    if n_capped:
        d = cur.nuis.q1 - cur.nuis.q0
        sign = 2 * cur.a - 1
        for i, s in enumerate(range(t, tau + 1)):
            nxt = y if s == tau else caches[s + 1].q_rule
            w = np.minimum(weights[i], weight_cap)
            d = d + sign * w * (nxt - caches[s].nuis.qa)
    else:
        resid = y - caches[tau].nuis.qa
        for s in range(tau - 1, t - 1, -1):
            nxt = caches[s + 1]
            resid = (nxt.q_rule - caches[s].nuis.qa) + nxt.compliance / nxt.nuis.g * resid
        d = _aipw(resid, cur.a, cur.nuis.g, cur.nuis.q1, cur.nuis.q0)
    if not np.all(np.isfinite(d)):
        raise ValueError(f"non-finite pseudo-outcome at time {t}")
    return d, n_capped


@dataclass(frozen=True)
class FittedODTR(LearnedBlipRule):
    """Learned rule sequence [d_1, ..., d_tau] with its training-time caches.

    As a rule it applies the full-data blip models; ``crossfit_rule()`` gives
    the cross-fitted assignments for the training units instead.
    """

    rule_covariates: tuple = ()
    caches: dict = field(default_factory=dict, compare=False, repr=False)
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def tau(self) -> int:
        return len(self.stages)

    def crossfit_rule(self) -> FixedAssignmentRule:
        return FixedAssignmentRule(tuple(s.assignment for s in self.stages), name="learned_crossfit")

    def training_propensities(self) -> list[np.ndarray]:
        """Unclipped cross-fitted P(A_t = 1 | H_t) from learning, for reuse in evaluation."""
        return [s.nuisances.p_raw for s in self.stages]

    def to_dict(self) -> dict[str, Any]:
        out = super().to_dict()
        out["rule_covariates"] = [list(v) for v in self.rule_covariates]
        out["diagnostics"] = self.diagnostics
        return out


def learn_odtr(
    data: LongitudinalDataset,
    rule_covariates: Sequence[Sequence[str]],
    learners: LearnerConfig | None = None,
    direction: Direction | str = Direction.MAXIMIZE,
    seed: int = 0,
    plans: Mapping[int, CrossFitPlan] | None = None,
) -> FittedODTR:
    """Learn the time-varying optimal rule by backward induction.

    Each stage draws fresh folds from the master seed (substream t) unless
    ``plans`` supplies them.
    """
    learners = learners or LearnerConfig()
    direction = Direction.parse(direction)
    check_rule_covariates(data, rule_covariates)
    y = data.y
    target = y
    caches: dict[int, StageCache] = {}
    stages: dict[int, FittedODTRStage] = {}
    capped = {}
    for t in range(data.tau, 0, -1):
        try:
            plan = plans[t] if plans is not None else stage_plan(data.n_units, learners.folds, seed, t)
            nuis = estimate_nuisances(data, t, target, learners, plan)
            caches[t] = StageCache(t, data.treatment(t), nuis)
            dvec, capped[t] = sequential_aipw_transform(t, caches, y, learners.weight_cap)
            stage = fit_stage(data, t, nuis, dvec, rule_covariates[t - 1], learners, direction, plan)
        except (DataError, ValueError, np.linalg.LinAlgError) as exc:
            raise StageError(t, exc) from exc
        caches[t].assignment = stage.assignment
        stage.diagnostics["capped_weights"] = capped[t]
        stages[t] = stage
        target = pseudo_outcome_update(caches[t])
    ordered = tuple(stages[t] for t in range(1, data.tau + 1))
    diagnostics = {
        "stages": {str(s.t): s.diagnostics for s in ordered},
        "capped_weights": int(sum(capped.values())),
    }
    return FittedODTR(
        stages=ordered,
        direction=direction,
        rule_covariates=tuple(tuple(v) for v in rule_covariates),
        caches=caches,
        diagnostics=diagnostics,
    )


def save_rule(rule: TreatmentRule, path: str | Path, extra: Mapping[str, Any] | None = None) -> None:
    payload = {"rule": rule.to_dict()}
    if extra:
        payload.update(extra)
    Path(path).write_text(json.dumps(payload, indent=2, default=_json_default))


def load_rule(path: str | Path) -> TreatmentRule:
    payload = json.loads(Path(path).read_text())
    return rule_from_dict(payload.get("rule", payload))


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialise {type(obj).__name__}")
