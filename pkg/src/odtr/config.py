"""Learner configuration shared by rule learning, evaluation and simulation."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Any, Mapping

from .learners import (
    GradientBoostedTrees,
    Intercept,
    LearnerSpec,
    Logistic,
    PenalizedLinear,
    SuperLearnerSpec,
    spec_from_dict,
    spec_to_dict,
)

G_MIN = 0.01
WEIGHT_CAP = 1e4


def default_outcome_library() -> SuperLearnerSpec:
    return SuperLearnerSpec(
        library=(
            Intercept(),
            PenalizedLinear(lam=0.001, penalty="lasso"),
            PenalizedLinear(lam=0.001, penalty="lasso", interactions=True),
            GradientBoostedTrees(num_trees=50, max_depth=2, learning_rate=0.1, min_leaf_size=10),
        )
    )


def default_propensity_library() -> SuperLearnerSpec:
    return SuperLearnerSpec(
        library=(
            Intercept(),
            Logistic(lam=0.0),
            GradientBoostedTrees(num_trees=50, max_depth=2, learning_rate=0.1, min_leaf_size=10),
        )
    )


def default_blip_learner() -> PenalizedLinear:
    return PenalizedLinear(lam=0.1, penalty="lasso")


@dataclass(frozen=True)
class LearnerConfig:
    """Which learners estimate Q_t, g_t and the blip, plus fold and clipping settings.

    ``folds=None`` picks K from the sample size (10, or n // 20 when smaller).
    """

    outcome: LearnerSpec | SuperLearnerSpec = field(default_factory=default_outcome_library)
    propensity: LearnerSpec | SuperLearnerSpec = field(default_factory=default_propensity_library)
    blip: LearnerSpec | SuperLearnerSpec = field(default_factory=default_blip_learner)
    folds: int | None = None
    g_min: float = G_MIN
    weight_cap: float = WEIGHT_CAP
    crossfit_blip: bool = True

    def __post_init__(self):
        if not 0 <= self.g_min < 0.5:
            raise ValueError("g_min must lie in [0, 0.5)")
        if self.folds is not None and self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.weight_cap <= 0:
            raise ValueError("weight_cap must be positive")

    def with_overrides(self, **kw) -> "LearnerConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome": spec_to_dict(self.outcome),
            "propensity": spec_to_dict(self.propensity),
            "blip": spec_to_dict(self.blip),
            "folds": self.folds,
            "g_min": self.g_min,
            "weight_cap": self.weight_cap,
            "crossfit_blip": self.crossfit_blip,
        }

    @classmethod
    def from_dict(cls, obj: Mapping[str, Any] | None) -> "LearnerConfig":
        obj = dict(obj or {})
        kw: dict[str, Any] = {}
        for key in ("outcome", "propensity", "blip"):
            if key in obj:
                kw[key] = spec_from_dict(obj.pop(key))
        for key in ("folds", "g_min", "weight_cap", "crossfit_blip"):
            if key in obj and obj[key] is not None:
                kw[key] = obj.pop(key)
        if obj:
            raise ValueError(f"unknown learner config keys {sorted(obj)}")
        return cls(**kw)
