"""Treatment rules: maps from a unit's history to a binary treatment."""

from __future__ import annotations

import enum
import operator
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .data import DataError, LongitudinalDataset, history_at


class Direction(enum.Enum):
    MAXIMIZE = "max"
    MINIMIZE = "min"

    @classmethod
    def parse(cls, value: "Direction | str") -> "Direction":
        if isinstance(value, Direction):
            return value
        v = str(value).lower()
        if v in ("max", "maximize", "maximise"):
            return cls.MAXIMIZE
        if v in ("min", "minimize", "minimise"):
            return cls.MINIMIZE
        raise ValueError(f"direction must be 'max' or 'min', got {value!r}")


def assign_from_blip(blip: np.ndarray, direction: Direction | str) -> np.ndarray:
    """Strict sign rule: I(B > 0) to maximize, I(B < 0) to minimize. Ties get 0."""
    blip = np.asarray(blip, dtype=float)
    if Direction.parse(direction) is Direction.MAXIMIZE:
        return (blip > 0).astype(np.int8)
    return (blip < 0).astype(np.int8)


def _require_history(data: LongitudinalDataset, t: int, columns: Sequence[str]) -> None:
    hist = set(history_at(data, t).columns)
    absent = [c for c in columns if c not in hist]
    if absent:
        raise DataError(f"rule uses column(s) {absent} that are not in the history at time {t}")


class TreatmentRule:
    """Base class; ``assign(data, t)`` returns a 0/1 vector of length n."""

    def assign(self, data: LongitudinalDataset, t: int) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError


@dataclass(frozen=True)
class StaticRule(TreatmentRule):
    value: int

    def __post_init__(self):
        if self.value not in (0, 1):
            raise ValueError("static rule value must be 0 or 1")

    def assign(self, data, t):
        data._check_t(t)
        return np.full(data.n_units, self.value, dtype=np.int8)

    def to_dict(self):
        return {"type": "static", "value": self.value}


_OPS = {
    ">": operator.gt,
    ">=": operator.ge,
    "<": operator.lt,
    "<=": operator.le,
    "==": operator.eq,
    "!=": operator.ne,
}


@dataclass(frozen=True)
class ThresholdRule(TreatmentRule):
    """Assign ``if_true`` where ``column <op> cutoff`` holds, else ``if_false``."""

    column: str
    op: str
    cutoff: float
    if_true: int = 1
    if_false: int = 0

    def __post_init__(self):
        if self.op not in _OPS:
            raise ValueError(f"unknown comparison {self.op!r}")
        if self.if_true not in (0, 1) or self.if_false not in (0, 1):
            raise ValueError("threshold branches must assign 0 or 1")

    def assign(self, data, t):
        _require_history(data, t, [self.column])
        hit = _OPS[self.op](data.column(self.column), self.cutoff)
        return np.where(hit, self.if_true, self.if_false).astype(np.int8)

    def to_dict(self):
        return {
            "type": "threshold",
            "column": self.column,
            "op": self.op,
            "cutoff": self.cutoff,
            "if_true": self.if_true,
            "if_false": self.if_false,
        }


@dataclass(frozen=True)
class ObservedRule(TreatmentRule):
    """d_t(H_t) = A_t as observed."""

    def assign(self, data, t):
        return data.treatment(t).astype(np.int8)

    def to_dict(self):
        return {"type": "observed"}


@dataclass(frozen=True)
class FixedAssignmentRule(TreatmentRule):
    """Precomputed per-time assignments for a specific dataset.

    Used for cross-fitted learned rules, where unit i's assignment comes from
    blip models that never saw i's fold.
    """

    assignments: tuple
    name: str = "fixed"

    def assign(self, data, t):
        data._check_t(t)
        a = np.asarray(self.assignments[t - 1], dtype=np.int8)
        if a.shape != (data.n_units,):
            raise DataError(f"fixed assignment has {a.size} entries, data has {data.n_units} units")
        return a

    def to_dict(self):
        return {"type": "fixed", "assignments": [np.asarray(a).tolist() for a in self.assignments]}


@dataclass(frozen=True)
class RuleSequence(TreatmentRule):
    """A different rule for each time point."""

    rules: tuple

    def assign(self, data, t):
        data._check_t(t)
        if len(self.rules) != data.tau:
            raise DataError(f"rule sequence has {len(self.rules)} stages, data has {data.tau}")
        return self.rules[t - 1].assign(data, t)

    def to_dict(self):
        return {"type": "sequence", "rules": [r.to_dict() for r in self.rules]}


@dataclass(frozen=True)
class BlipStage:
    """One stage of a learned rule: a blip model over the rule covariates."""

    t: int
    columns: tuple
    model: Any
    diagnostics: dict = field(default_factory=dict, compare=False)

    def blip(self, data: LongitudinalDataset) -> np.ndarray:
        _require_history(data, self.t, self.columns)
        return self.model.predict(data.matrix(self.columns))


@dataclass(frozen=True)
class LearnedBlipRule(TreatmentRule):
    """Sign of a fitted blip per time point, reading only that stage's V_t."""

    stages: tuple
    direction: Direction = Direction.MAXIMIZE

    def stage(self, t: int) -> BlipStage:
        for s in self.stages:
            if s.t == t:
                return s
        raise DataError(f"learned rule has no stage for time {t}")

    def blip(self, data, t):
        return self.stage(t).blip(data)

    def assign(self, data, t):
        data._check_t(t)
        return assign_from_blip(self.blip(data, t), self.direction)

    def to_dict(self):
        return {
            "type": "learned",
            "direction": self.direction.value,
            "stages": [
                {
                    "t": s.t,
                    "rule_covariates": list(s.columns),
                    "model": s.model.to_dict(),
                    "diagnostics": s.diagnostics,
                }
                for s in self.stages
            ],
        }


def apply_rule(rule: TreatmentRule, data: LongitudinalDataset, t: int) -> np.ndarray:
    return rule.assign(data, t)


def rule_from_dict(obj: dict[str, Any]) -> TreatmentRule:
    from .learners import model_from_dict

    kind = obj.get("type")
    if kind == "static":
        return StaticRule(int(obj["value"]))
    if kind == "observed":
        return ObservedRule()
    if kind == "threshold":
        return ThresholdRule(
            obj["column"], obj["op"], float(obj["cutoff"]), int(obj.get("if_true", 1)), int(obj.get("if_false", 0))
        )
    if kind == "fixed":
        return FixedAssignmentRule(tuple(np.asarray(a, dtype=np.int8) for a in obj["assignments"]))
    if kind == "sequence":
        return RuleSequence(tuple(rule_from_dict(r) for r in obj["rules"]))
    if kind == "learned":
        stages = tuple(
            BlipStage(int(s["t"]), tuple(s["rule_covariates"]), model_from_dict(s["model"]), s.get("diagnostics", {}))
            for s in obj["stages"]
        )
        return LearnedBlipRule(stages, Direction.parse(obj["direction"]))
    raise ValueError(f"unknown rule type {kind!r}")


def parse_rule(text: str) -> TreatmentRule:
    """Parse a compact rule string.

    ``static:0``, ``static:1``, ``observed``, or
    ``threshold:COLUMN:OP:CUTOFF[:IF_TRUE:IF_FALSE]``. Separate per-time
    rules with ``;`` to build a sequence.
    """
    text = text.strip()
    if ";" in text:
        return RuleSequence(tuple(parse_rule(part) for part in text.split(";")))
    parts = text.split(":")
    head = parts[0].lower()
    if head == "static" and len(parts) == 2:
        return StaticRule(int(parts[1]))
    if head == "observed" and len(parts) == 1:
        return ObservedRule()
    if head == "threshold" and len(parts) in (4, 6):
        branches = (int(parts[4]), int(parts[5])) if len(parts) == 6 else (1, 0)
        return ThresholdRule(parts[1], parts[2], float(parts[3]), *branches)
    raise ValueError(f"cannot parse rule {text!r}")
