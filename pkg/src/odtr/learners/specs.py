"""Learner specifications and their JSON form."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Any, Union

SQUARED = "squared"
BINOMIAL = "binomial"
FAMILIES = (SQUARED, BINOMIAL)


class LearnerSpecError(ValueError):
    pass


def _finite(name: str, value: float) -> None:
    if not math.isfinite(value):
        raise LearnerSpecError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class Intercept:
    """Mean-only learner."""

    families = (SQUARED, BINOMIAL)

    @property
    def name(self) -> str:
        return "intercept"


@dataclass(frozen=True)
class PenalizedLinear:
    """Linear regression with a ridge or lasso penalty on standardized features.

    With ``interactions=True`` all pairwise products of the input columns are
    appended to the design before standardization.
    """

    lam: float = 0.0
    penalty: str = "lasso"
    interactions: bool = False
    families = (SQUARED,)

    def __post_init__(self):
        _finite("lambda", self.lam)
        if self.lam < 0:
            raise LearnerSpecError("lambda must be >= 0")
        if self.penalty not in ("lasso", "ridge"):
            raise LearnerSpecError(f"unknown penalty kind {self.penalty!r}")

    @property
    def name(self) -> str:
        suffix = "_x" if self.interactions else ""
        return f"{self.penalty}{suffix}(lambda={self.lam:g})"


@dataclass(frozen=True)
class Logistic:
    """Logistic regression with a ridge penalty on standardized slopes."""

    lam: float = 0.0
    interactions: bool = False
    families = (BINOMIAL,)

    def __post_init__(self):
        _finite("lambda", self.lam)
        if self.lam < 0:
            raise LearnerSpecError("lambda must be >= 0")

    @property
    def name(self) -> str:
        suffix = "_x" if self.interactions else ""
        return f"logistic{suffix}(lambda={self.lam:g})"


@dataclass(frozen=True)
class GradientBoostedTrees:
    num_trees: int = 100
    max_depth: int = 2
    learning_rate: float = 0.1
    min_leaf_size: int = 10
    max_bins: int = 32
    families = (SQUARED, BINOMIAL)

    def __post_init__(self):
        _finite("learning_rate", self.learning_rate)
        if not 0 < self.learning_rate <= 1:
            raise LearnerSpecError("learning_rate must lie in (0, 1]")
        if self.num_trees < 0:
            raise LearnerSpecError("num_trees must be >= 0")
        if self.max_depth < 1:
            raise LearnerSpecError("max_depth must be >= 1")
        if self.min_leaf_size < 1:
            raise LearnerSpecError("min_leaf_size must be >= 1")
        if not 2 <= self.max_bins <= 255:
            raise LearnerSpecError("max_bins must lie in [2, 255]")

    @property
    def name(self) -> str:
        return (
            f"gbt(trees={self.num_trees},depth={self.max_depth},"
            f"lr={self.learning_rate:g},leaf={self.min_leaf_size})"
        )


LearnerSpec = Union[Intercept, PenalizedLinear, Logistic, GradientBoostedTrees]


@dataclass(frozen=True)
class SuperLearnerSpec:
    """Discrete ("winner-take-all") super learner over a library.

    ``nested=True`` runs the full super learner inside every cross-fitting
    training split. The default reuses the outer cross-fitting folds for
    selection, which costs ``K * len(library)`` fits instead of
    ``K * (V + 1) * len(library)``.
    """

    library: tuple = field(default_factory=tuple)
    folds: int = 10
    nested: bool = False

    def __post_init__(self):
        if len(self.library) == 0:
            raise LearnerSpecError("super learner library must be nonempty")
        if self.folds < 2:
            raise LearnerSpecError("super learner needs at least 2 folds")

    @property
    def name(self) -> str:
        return "discrete_sl[" + ", ".join(s.name for s in self.library) + "]"


def check_family(spec: LearnerSpec, family: str) -> None:
    if family not in FAMILIES:
        raise LearnerSpecError(f"unknown loss family {family!r}")
    if family not in spec.families:
        raise LearnerSpecError(f"{spec.name} does not support the {family} family")


_TYPES = {
    "intercept": Intercept,
    "mean": Intercept,
    "lasso": PenalizedLinear,
    "ridge": PenalizedLinear,
    "linear": PenalizedLinear,
    "logistic": Logistic,
    "gbt": GradientBoostedTrees,
}


def spec_from_dict(obj: dict | str) -> LearnerSpec | SuperLearnerSpec:
    """Build a learner spec from its config form.

    Accepts a bare type name (``"intercept"``), a dict with a ``"type"`` key,
    or a list / ``{"library": [...]}`` dict for a super learner.
    """
    if isinstance(obj, str):
        obj = {"type": obj}
    if isinstance(obj, list):
        obj = {"library": obj}
    if not isinstance(obj, dict):
        raise LearnerSpecError(f"cannot read learner spec from {obj!r}")
    if "library" in obj:
        library = tuple(spec_from_dict(item) for item in obj["library"])
        for item in library:
            if isinstance(item, SuperLearnerSpec):
                raise LearnerSpecError("super learners cannot be nested in a library")
        return SuperLearnerSpec(
            library=library,
            folds=int(obj.get("folds", 10)),
            nested=bool(obj.get("nested", False)),
        )
    kind = str(obj.get("type", "")).lower()
    if kind not in _TYPES:
        raise LearnerSpecError(f"unknown learner type {kind!r}")
    params = {k: v for k, v in obj.items() if k != "type"}
    if "lambda" in params:
        params["lam"] = params.pop("lambda")
    if kind in ("lasso", "ridge"):
        params.setdefault("penalty", kind)
    elif kind == "linear":
        params.setdefault("penalty", "ridge")
    try:
        return _TYPES[kind](**params)
    except TypeError as exc:
        raise LearnerSpecError(f"bad parameters for {kind}: {exc}") from None


def spec_to_dict(spec: LearnerSpec | SuperLearnerSpec) -> dict[str, Any]:
    if isinstance(spec, SuperLearnerSpec):
        return {
            "library": [spec_to_dict(s) for s in spec.library],
            "folds": spec.folds,
            "nested": spec.nested,
        }
    kind = {
        Intercept: "intercept",
        Logistic: "logistic",
        GradientBoostedTrees: "gbt",
    }.get(type(spec))
    params = asdict(spec)
    if isinstance(spec, PenalizedLinear):
        kind = spec.penalty
        params.pop("penalty")
    if "lam" in params:
        params["lambda"] = params.pop("lam")
    return {"type": kind, **params}
