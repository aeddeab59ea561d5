"""Longitudinal wide-format data: validation, histories and CSV ingestion."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Invalid input data or schema."""


@dataclass(frozen=True)
class HistoryView:
    """Columns of H_t = (L_1..L_t, A_1..A_{t-1}) in declaration order."""

    t: int
    columns: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class LongitudinalDataset:
    """n units observed over tau decision points, one row per unit.

    ``covariates[t-1]`` lists the columns of L_t, ``treatments[t-1]`` names
    A_t and ``outcome`` names the terminal Y. ``columns`` fixes the
    declaration order used for every derived design.
    """

    values: np.ndarray
    columns: tuple[str, ...]
    covariates: tuple[tuple[str, ...], ...]
    treatments: tuple[str, ...]
    outcome: str
    ids: tuple | None = None

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "covariates", tuple(tuple(c) for c in self.covariates))
        object.__setattr__(self, "treatments", tuple(self.treatments))
        object.__setattr__(self, "_index", {c: j for j, c in enumerate(self.columns)})
        self._validate()

    def _validate(self):
        if len(set(self.columns)) != len(self.columns):
            raise DataError("column names must be unique")
        if self.values.ndim != 2 or self.values.shape[1] != len(self.columns):
            raise DataError("values must be an (n, n_columns) matrix")
        if self.values.shape[0] < 1:
            raise DataError("dataset has no units")
        tau = len(self.treatments)
        if tau < 1:
            raise DataError("at least one treatment column is required")
        if len(self.covariates) != tau:
            raise DataError(f"need covariate blocks for {tau} time points, got {len(self.covariates)}")
        roles = [self.outcome, *self.treatments, *(c for block in self.covariates for c in block)]
        if len(set(roles)) != len(roles):
            raise DataError("a column was assigned more than one role")
        for c in roles:
            if c not in self._index:
                raise DataError(f"unknown column {c!r}")
        if np.isnan(self.values).any():
            i, j = np.argwhere(np.isnan(self.values))[0]
            raise DataError(f"missing value at row {i + 1}, column {self.columns[j]!r}")
        if not np.isfinite(self.values).all():
            i, j = np.argwhere(~np.isfinite(self.values))[0]
            raise DataError(f"non-finite value at row {i + 1}, column {self.columns[j]!r}")
        for a in self.treatments:
            col = self.column(a)
            bad = np.flatnonzero((col != 0) & (col != 1))
            if bad.size:
                raise DataError(
                    f"non-binary treatment at row {bad[0] + 1}: column {a!r} has value {col[bad[0]]:g}"
                )

    # ------------------------------------------------------------------ views

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def tau(self) -> int:
        return len(self.treatments)

    @property
    def y(self) -> np.ndarray:
        return self.column(self.outcome)

    def column(self, name: str) -> np.ndarray:
        try:
            return self.values[:, self._index[name]]
        except KeyError:
            raise DataError(f"unknown column {name!r}") from None

    def treatment(self, t: int) -> np.ndarray:
        self._check_t(t)
        return self.values[:, self._index[self.treatments[t - 1]]]

    def matrix(self, names: Sequence[str]) -> np.ndarray:
        try:
            idx = [self._index[c] for c in names]
        except KeyError as exc:
            raise DataError(f"unknown column {exc.args[0]!r}") from None
        return self.values[:, idx]

    def frame(self) -> pd.DataFrame:
        return pd.DataFrame(self.values, columns=list(self.columns))

    def _check_t(self, t: int) -> None:
        if not 1 <= t <= self.tau:
            raise IndexError(f"time point {t} outside 1..{self.tau}")

    def history_at(self, t: int) -> HistoryView:
        return history_at(self, t)

    def replace_column(self, name: str, values: np.ndarray) -> "LongitudinalDataset":
        new = self.values.copy()
        new[:, self._index[name]] = values
        return LongitudinalDataset(new, self.columns, self.covariates, self.treatments, self.outcome, self.ids)

    @classmethod
    def from_frame(
        cls,
        frame: pd.DataFrame,
        covariates: Sequence[Sequence[str]],
        treatments: Sequence[str],
        outcome: str,
    ) -> "LongitudinalDataset":
        """Build from a DataFrame; only role-bearing columns are kept, in frame order."""
        roles = {outcome, *treatments, *(c for block in covariates for c in block)}
        missing = [c for c in roles if c not in frame.columns]
        if missing:
            raise DataError(f"unknown column(s) in schema: {sorted(missing)}")
        cols = [c for c in frame.columns if c in roles]
        return cls(frame[cols].to_numpy(dtype=float), cols, covariates, treatments, outcome)


def history_at(data: LongitudinalDataset, t: int) -> HistoryView:
    """History columns available just before A_t is assigned."""
    data._check_t(t)
    members = {c for block in data.covariates[:t] for c in block}
    members.update(data.treatments[: t - 1])
    return HistoryView(t, tuple(c for c in data.columns if c in members))


# ------------------------------------------------------------------ schema


@dataclass(frozen=True)
class Schema:
    """Column roles plus the rule covariates V_t for each time point."""

    outcome: str
    treatments: tuple[str, ...]
    covariates: tuple[tuple[str, ...], ...]
    rule_covariates: tuple[tuple[str, ...], ...] | None = None
    order: tuple[str, ...] = ()
    id_column: str | None = None

    @property
    def tau(self) -> int:
        return len(self.treatments)

    def to_dict(self) -> dict[str, Any]:
        roles: dict[str, Any] = {}
        for c in self.order:
            if c == self.outcome:
                roles[c] = "outcome"
            elif c in self.treatments:
                roles[c] = {"treatment": self.treatments.index(c) + 1}
            else:
                for t, block in enumerate(self.covariates, start=1):
                    if c in block:
                        roles[c] = {"covariate": t}
        if self.id_column:
            roles[self.id_column] = "id"
        out: dict[str, Any] = {"columns": roles}
        if self.rule_covariates is not None:
            out["rule_covariates"] = {str(t): list(v) for t, v in enumerate(self.rule_covariates, start=1)}
        return out


def parse_schema(obj: Mapping[str, Any]) -> Schema:
    """Read a column-role map.

    Either ``{"columns": {...}, "rule_covariates": {...}}`` or a flat map where
    every key except ``rule_covariates`` is a column, e.g.
    ``{"Y": "outcome", "A1": {"treatment": 1}, "W1": {"covariate": 1}}``.
    """
    obj = dict(obj)
    rules = obj.pop("rule_covariates", None)
    roles = obj.pop("columns", None)
    if roles is None:
        roles = obj
    outcome = None
    id_column = None
    treat: dict[int, str] = {}
    cov: dict[int, list[str]] = {}
    order = []
    for col, role in roles.items():
        order.append(col)
        if role == "outcome":
            if outcome is not None:
                raise DataError("schema names more than one outcome column")
            outcome = col
        elif role == "id":
            id_column = col
        elif isinstance(role, Mapping) and "treatment" in role:
            t = int(role["treatment"])
            if t in treat:
                raise DataError(f"schema names two treatments for time {t}")
            treat[t] = col
        elif isinstance(role, Mapping) and "covariate" in role:
            cov.setdefault(int(role["covariate"]), []).append(col)
        else:
            raise DataError(f"unrecognised role {role!r} for column {col!r}")
    if outcome is None:
        raise DataError("schema names no outcome column")
    tau = len(treat)
    if sorted(treat) != list(range(1, tau + 1)):
        raise DataError(f"treatment time points must be 1..{tau}, got {sorted(treat)}")
    bad = [t for t in cov if not 1 <= t <= tau]
    if bad:
        raise DataError(f"covariate time points {bad} outside 1..{tau}")
    rule_cov = None
    if rules is not None:
        if isinstance(rules, Mapping):
            rule_cov = tuple(tuple(rules.get(str(t), rules.get(t, ()))) for t in range(1, tau + 1))
        else:
            rule_cov = tuple(tuple(v) for v in rules)
        if len(rule_cov) != tau:
            raise DataError(f"rule_covariates must list {tau} time points")
    order = [c for c in order if c != id_column]
    return Schema(
        outcome=outcome,
        treatments=tuple(treat[t] for t in range(1, tau + 1)),
        covariates=tuple(tuple(cov.get(t, ())) for t in range(1, tau + 1)),
        rule_covariates=rule_cov,
        order=tuple(order),
        id_column=id_column,
    )


def load_schema(path: str | Path) -> Schema:
    with open(path) as fh:
        return parse_schema(json.load(fh))


def load_csv(path: str | Path, schema: Schema | Mapping[str, Any]) -> LongitudinalDataset:
    """Read a wide CSV (one row per unit) and validate it against ``schema``.

    Row order is preserved. Missing cells, non-binary treatments and
    unknown schema columns are rejected with their location.
    """
    if not isinstance(schema, Schema):
        schema = parse_schema(schema)
    path = Path(path)
    if not path.is_file():
        raise DataError(f"data file not found: {path}")
    frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    missing = [c for c in schema.order if c not in frame.columns]
    if schema.id_column and schema.id_column not in frame.columns:
        missing.append(schema.id_column)
    if missing:
        raise DataError(f"unknown column(s) in schema: {missing}")
    values = np.empty((len(frame), len(schema.order)))
    for j, col in enumerate(schema.order):
        raw = frame[col].str.strip()
        empty = np.flatnonzero((raw == "").to_numpy() | raw.str.upper().isin(["NA", "NAN"]).to_numpy())
        if empty.size:
            raise DataError(f"missing value at row {empty[0] + 1}, column {col!r}")
        num = pd.to_numeric(raw, errors="coerce")
        bad = np.flatnonzero(num.isna().to_numpy())
        if bad.size:
            raise DataError(f"non-numeric value {raw.iloc[bad[0]]!r} at row {bad[0] + 1}, column {col!r}")
        values[:, j] = num.to_numpy(dtype=float)
    ids = tuple(frame[schema.id_column]) if schema.id_column else None
    return LongitudinalDataset(values, schema.order, schema.covariates, schema.treatments, schema.outcome, ids)


def check_rule_covariates(data: LongitudinalDataset, rule_covariates: Sequence[Sequence[str]]) -> None:
    """Every V_t column must belong to H_t."""
    if len(rule_covariates) != data.tau:
        raise DataError(f"rule covariates given for {len(rule_covariates)} time points, data has {data.tau}")
    for t, cols in enumerate(rule_covariates, start=1):
        hist = set(history_at(data, t).columns)
        for c in cols:
            if c not in hist:
                raise DataError(f"rule covariate {c!r} is not in the history at time {t}")
