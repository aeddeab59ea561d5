import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from odtr.data import DataError, LongitudinalDataset, history_at, load_csv, load_schema, parse_schema

SCHEMA = {
    "id": "id",
    "W1": {"covariate": 1},
    "W2": {"covariate": 1},
    "A1": {"treatment": 1},
    "W3": {"covariate": 2},
    "A2": {"treatment": 2},
    "Y": "outcome",
}

GOOD_CSV = """id,W1,W2,A1,W3,A2,Y
1,0.1,-0.2,1,0.5,0,1.0
2,-0.3,0.4,0,0.25,1,2.0
3,0.7,0.0,1,-0.4,1,0.5
"""


def _write(tmp_path, text, name="data.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_load_three_rows(tmp_path):
    data = load_csv(_write(tmp_path, GOOD_CSV), SCHEMA)
    assert data.n_units == 3
    assert data.tau == 2
    assert data.ids == ("1", "2", "3")
    np.testing.assert_array_equal(data.y, [1.0, 2.0, 0.5])
    np.testing.assert_array_equal(data.column("W3"), [0.5, 0.25, -0.4])


def test_non_binary_treatment_reports_row(tmp_path):
    text = GOOD_CSV.replace("2,-0.3,0.4,0,", "2,-0.3,0.4,2,")
    with pytest.raises(DataError, match="non-binary treatment at row 2"):
        load_csv(_write(tmp_path, text), SCHEMA)


def test_empty_outcome_cell_is_named(tmp_path):
    text = GOOD_CSV.replace("-0.4,1,0.5", "-0.4,1,")
    with pytest.raises(DataError, match=r"row 3, column 'Y'"):
        load_csv(_write(tmp_path, text), SCHEMA)


def test_missing_file(tmp_path):
    with pytest.raises(DataError, match="not found"):
        load_csv(tmp_path / "nope.csv", SCHEMA)


def test_schema_column_absent_from_file(tmp_path):
    schema = dict(SCHEMA, W9={"covariate": 2})
    with pytest.raises(DataError, match="W9"):
        load_csv(_write(tmp_path, GOOD_CSV), schema)


def test_non_numeric_cell(tmp_path):
    text = GOOD_CSV.replace("0.1,-0.2", "abc,-0.2")
    with pytest.raises(DataError, match=r"row 1, column 'W1'"):
        load_csv(_write(tmp_path, text), SCHEMA)


def test_row_order_preserved(tmp_path):
    lines = GOOD_CSV.strip().splitlines()
    text = "\n".join([lines[0], lines[3], lines[1], lines[2]]) + "\n"
    data = load_csv(_write(tmp_path, text), SCHEMA)
    assert data.ids == ("3", "1", "2")


def test_schema_with_rule_covariates_from_file(tmp_path):
    obj = {"columns": SCHEMA, "rule_covariates": {"1": ["W1"], "2": ["W1", "A1"]}}
    path = _write(tmp_path, json.dumps(obj), "schema.json")
    schema = load_schema(path)
    assert schema.rule_covariates == (("W1",), ("W1", "A1"))
    assert parse_schema(schema.to_dict()) == schema


@pytest.mark.parametrize(
    "bad, msg",
    [
        ({"Y": "outcome", "Z": "outcome", "A1": {"treatment": 1}}, "more than one outcome"),
        ({"A1": {"treatment": 1}}, "no outcome"),
        ({"Y": "outcome", "A1": {"treatment": 2}}, "1..1"),
        ({"Y": "outcome", "A1": {"treatment": 1}, "W": "weird"}, "unrecognised role"),
        ({"Y": "outcome", "A1": {"treatment": 1}, "W": {"covariate": 3}}, "outside"),
    ],
)
def test_schema_errors(bad, msg):
    with pytest.raises(DataError, match=msg):
        parse_schema(bad)


def test_history_views(tiny_two_stage):
    assert history_at(tiny_two_stage, 1).columns == ("W1", "W2")
    assert history_at(tiny_two_stage, 2).columns == ("W1", "W2", "A1", "W3")
    with pytest.raises(IndexError):
        history_at(tiny_two_stage, 3)
    with pytest.raises(IndexError):
        history_at(tiny_two_stage, 0)


def test_dataset_is_read_only(tiny_two_stage):
    with pytest.raises(ValueError):
        tiny_two_stage.values[0, 0] = 5.0


def test_dataset_validation():
    cols = ("X", "A", "Y")
    with pytest.raises(DataError, match="missing value at row 2"):
        LongitudinalDataset([[0, 1, 1], [np.nan, 0, 1]], cols, (("X",),), ("A",), "Y")
    with pytest.raises(DataError, match="unique"):
        LongitudinalDataset([[0, 1, 1]], ("X", "X", "Y"), (("X",),), ("X",), "Y")
    with pytest.raises(DataError, match="more than one role"):
        LongitudinalDataset([[0, 1, 1]], cols, (("A",),), ("A",), "Y")
    with pytest.raises(DataError, match="unknown column"):
        LongitudinalDataset([[0, 1, 1]], cols, (("Z",),), ("A",), "Y")


@given(
    tau=st.integers(1, 4),
    widths=st.lists(st.integers(0, 3), min_size=4, max_size=4),
)
def test_histories_are_nested(tau, widths):
    cols, cov, treat = [], [], []
    for t in range(1, tau + 1):
        block = [f"L{t}_{j}" for j in range(widths[t - 1])]
        cov.append(block)
        cols += block + [f"A{t}"]
        treat.append(f"A{t}")
    cols.append("Y")
    data = LongitudinalDataset(np.zeros((2, len(cols))), cols, cov, treat, "Y")
    assert not set(history_at(data, 1).columns) & set(treat)
    for t in range(1, tau):
        now = set(history_at(data, t).columns)
        nxt = set(history_at(data, t + 1).columns)
        assert now < nxt
        assert nxt - now == {f"A{t}", *cov[t]}
        order = [cols.index(c) for c in history_at(data, t + 1).columns]
        assert order == sorted(order)
