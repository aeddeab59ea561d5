"""Policy value E[Y_D] of a rule sequence with influence-function inference."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np
from scipy.stats import norm

from .config import LearnerConfig
from .data import LongitudinalDataset, history_at
from .learners import BINOMIAL, SQUARED, CrossFitPlan, cross_fit
from .rules import TreatmentRule
from .single import _check_arms, stage_plan


class ContrastError(ValueError):
    pass


@dataclass
class PolicyValueEstimate:
    """psi_hat = mean(eif), se = sd(eif) / sqrt(n), Wald interval at level 1 - alpha."""

    psi_hat: float
    se: float
    ci: tuple[float, float]
    eif: np.ndarray = field(repr=False)
    alpha: float = 0.05
    rule_name: str = ""
    clipped_weight_fraction: float = 0.0
    capped_weights: int = 0
    diagnostics: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.eif.size

    @classmethod
    def from_eif(cls, eif: np.ndarray, alpha: float = 0.05, **kw) -> "PolicyValueEstimate":
        eif = np.asarray(eif, dtype=float)
        psi = float(eif.mean())
        se = float(eif.std(ddof=1) / np.sqrt(eif.size)) if eif.size > 1 else 0.0
        z = norm.ppf(1 - alpha / 2)
        return cls(psi, se, (psi - z * se, psi + z * se), eif, alpha, **kw)

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_name": self.rule_name,
            "psi_hat": self.psi_hat,
            "se": self.se,
            "ci": list(self.ci),
            "alpha": self.alpha,
            "n": self.n,
            "clipped_weight_fraction": self.clipped_weight_fraction,
            "capped_weights": self.capped_weights,
            "diagnostics": self.diagnostics,
        }


@dataclass
class ContrastEstimate:
    """Risk ratio psi_a / psi_b with a log-scale influence-function interval."""

    rr: float
    log_rr_se: float
    ci: tuple[float, float]
    alpha: float = 0.05
    rule_name: str = ""
    reference_rule: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_name": self.rule_name,
            "reference_rule": self.reference_rule,
            "rr": self.rr,
            "log_rr_se": self.log_rr_se,
            "ci": list(self.ci),
            "alpha": self.alpha,
        }


@dataclass
class DifferenceEstimate:
    diff: float
    se: float
    ci: tuple[float, float]
    alpha: float = 0.05
    rule_name: str = ""
    reference_rule: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "rule_name": self.rule_name,
            "reference_rule": self.reference_rule,
            "difference": self.diff,
            "se": self.se,
            "ci": list(self.ci),
            "alpha": self.alpha,
        }


def compute_propensities(
    data: LongitudinalDataset,
    learners: LearnerConfig,
    plans: Mapping[int, CrossFitPlan],
) -> list[np.ndarray]:
    """Cross-fitted, unclipped P(A_t = 1 | H_t) for every t."""
    out = []
    for t in range(1, data.tau + 1):
        hist = list(history_at(data, t).columns)
        a = data.treatment(t)
        _check_arms(a, plans[t], t)
        res = cross_fit(learners.propensity, data.matrix(hist), a, BINOMIAL, plans[t], feature_names=hist)
        out.append(res.pred)
    return out


def policy_eif(
    y: np.ndarray,
    treatments: Sequence[np.ndarray],
    assignments: Sequence[np.ndarray],
    g_rule: Sequence[np.ndarray],
    q_rule: Sequence[np.ndarray],
    weight_cap: float | None = None,
) -> tuple[np.ndarray, int]:
    """Uncentered influence values for E[Y_D].

    phi = Q_1(d_1) + sum_t [prod_{k<=t} 1(A_k = d_k) / g_k] (Q_{t+1}(d_{t+1}) - Q_t(d_t))
    with Q_{tau+1} = Y. ``g_rule[t]`` is P(A_t = d_t | H_t); ``q_rule[t]`` is
    the fitted Q_t at A_t = d_t. Returns phi and the count of capped weights.
    """
    tau = len(treatments)
    y = np.asarray(y, dtype=float)
    phi = np.array(q_rule[0], dtype=float)
    cum = np.ones_like(phi)
    n_capped = 0
    for t in range(tau):
        follow = (np.asarray(treatments[t]) == np.asarray(assignments[t])).astype(float)
        cum = cum * follow / g_rule[t]
        if weight_cap is not None:
            over = cum > weight_cap
            n_capped += int(over.sum())
            cum = np.where(over, weight_cap, cum)
        nxt = y if t == tau - 1 else q_rule[t + 1]
        phi = phi + cum * (nxt - q_rule[t])
    return phi, n_capped


def sdr_policy_value(
    data: LongitudinalDataset,
    rule: TreatmentRule,
    learners: LearnerConfig | None = None,
    seed: int = 0,
    alpha: float = 0.05,
    propensities: Sequence[np.ndarray] | None = None,
    plans: Mapping[int, CrossFitPlan] | None = None,
    targets: str = "plugin",
    rule_name: str | None = None,
) -> PolicyValueEstimate:
    """Doubly robust estimate of the mean outcome had treatment followed ``rule``.

    Outcome regressions run backward from Q_{tau+1} = Y, each regressing the
    next stage's prediction at the rule on (H_t, A_t) with cross-fitting.
    ``targets="sdr"`` regresses the doubly robust transformed target instead
    of the plug-in prediction. ``propensities`` (unclipped P(A_t = 1 | H_t))
    can be passed to reuse earlier fits; they are clipped at ``g_min``.
    """
    learners = learners or LearnerConfig()
    if targets not in ("plugin", "sdr"):
        raise ValueError("targets must be 'plugin' or 'sdr'")
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    tau = data.tau
    n = data.n_units
    if plans is None:
        plans = {t: stage_plan(n, learners.folds, seed, t) for t in range(1, tau + 1)}
    d = [np.asarray(rule.assign(data, t), dtype=float) for t in range(1, tau + 1)]
    a = [data.treatment(t) for t in range(1, tau + 1)]
    if propensities is None:
        propensities = compute_propensities(data, learners, plans)
    if len(propensities) != tau:
        raise ValueError(f"need propensities for {tau} time points")

    lo, hi = learners.g_min, 1 - learners.g_min
    g_rule = []
    clipped = np.zeros(n, dtype=bool)
    for t in range(tau):
        p = np.asarray(propensities[t], dtype=float)
        raw = d[t] * p + (1 - d[t]) * (1 - p)
        g = np.clip(raw, lo, hi)
        clipped |= (g != raw) & (a[t] == d[t])
        g_rule.append(g)

    q_rule: list[np.ndarray] = [None] * tau
    target = data.y
    selected = {}
    for t in range(tau, 0, -1):
        hist = list(history_at(data, t).columns)
        names = hist + [data.treatments[t - 1]]
        X = data.matrix(names)
        Xd = X.copy()
        Xd[:, -1] = d[t - 1]
        out = cross_fit(learners.outcome, X, target, SQUARED, plans[t], [Xd], names)
        q_rule[t - 1] = out.counterfactual[0]
        selected[str(t)] = sorted(set(out.selected))
        if targets == "plugin":
            target = q_rule[t - 1]
        else:
            target, _ = policy_eif(
                data.y, a[t - 1 :], d[t - 1 :], g_rule[t - 1 :], q_rule[t - 1 :], learners.weight_cap
            )
    eif, n_capped = policy_eif(data.y, a, d, g_rule, q_rule, learners.weight_cap)
    if not np.all(np.isfinite(eif)):
        raise ValueError("non-finite influence values")
    name = rule_name or getattr(rule, "name", None) or type(rule).__name__
    return PolicyValueEstimate.from_eif(
        eif,
        alpha,
        rule_name=name,
        clipped_weight_fraction=float(clipped.mean()),
        capped_weights=n_capped,
        diagnostics={
            "outcome_learners": selected,
            "fraction_following_rule": [float(np.mean(a[t] == d[t])) for t in range(tau)],
            "targets": targets,
        },
    )


def rr_contrast(a: PolicyValueEstimate, b: PolicyValueEstimate, alpha: float = 0.05) -> ContrastEstimate:
    """psi_a / psi_b; log-RR influence values phi_a / psi_a - phi_b / psi_b."""
    if a.n != b.n:
        raise ContrastError("contrasted estimates must come from the same units")
    if a.psi_hat <= 0 or b.psi_hat <= 0:
        raise ContrastError(
            f"risk ratio needs positive values (got {a.psi_hat:.4g} and {b.psi_hat:.4g}); "
            "use the difference scale (difference_contrast / --scale diff) instead"
        )
    rr = a.psi_hat / b.psi_hat
    infl = a.eif / a.psi_hat - b.eif / b.psi_hat
    se = float(infl.std(ddof=1) / np.sqrt(infl.size)) if infl.size > 1 else 0.0
    z = norm.ppf(1 - alpha / 2)
    log_rr = np.log(rr)
    return ContrastEstimate(
        float(rr), se, (float(np.exp(log_rr - z * se)), float(np.exp(log_rr + z * se))), alpha, a.rule_name, b.rule_name
    )


def difference_contrast(a: PolicyValueEstimate, b: PolicyValueEstimate, alpha: float = 0.05) -> DifferenceEstimate:
    if a.n != b.n:
        raise ContrastError("contrasted estimates must come from the same units")
    infl = a.eif - b.eif
    diff = float(infl.mean())
    se = float(infl.std(ddof=1) / np.sqrt(infl.size)) if infl.size > 1 else 0.0
    z = norm.ppf(1 - alpha / 2)
    return DifferenceEstimate(diff, se, (diff - z * se, diff + z * se), alpha, a.rule_name, b.rule_name)
