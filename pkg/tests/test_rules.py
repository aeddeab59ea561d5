import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from odtr.data import DataError, LongitudinalDataset
from odtr.learners import SQUARED, LinearModel
from odtr.rules import (
    BlipStage,
    Direction,
    FixedAssignmentRule,
    LearnedBlipRule,
    ObservedRule,
    RuleSequence,
    StaticRule,
    ThresholdRule,
    apply_rule,
    assign_from_blip,
    parse_rule,
    rule_from_dict,
)


def _one_stage(values, columns=("prior_use", "A", "Y")):
    return LongitudinalDataset(np.asarray(values, float), columns, ((columns[0],),), ("A",), "Y")


def test_static_all_ones(tiny_two_stage):
    for t in (1, 2):
        np.testing.assert_array_equal(apply_rule(StaticRule(1), tiny_two_stage, t), [1, 1, 1])


def test_threshold_componentwise():
    data = _one_stage([[0, 0, 1], [1, 1, 0], [1, 0, 2]])
    rule = ThresholdRule("prior_use", ">", 0, 1, 0)
    np.testing.assert_array_equal(apply_rule(rule, data, 1), [0, 1, 1])
    flipped = ThresholdRule("prior_use", ">", 0, 0, 1)
    np.testing.assert_array_equal(apply_rule(flipped, data, 1), [1, 0, 0])


def test_strict_sign_rule():
    np.testing.assert_array_equal(assign_from_blip([0.3, -0.2, 0.0], Direction.MAXIMIZE), [1, 0, 0])
    np.testing.assert_array_equal(assign_from_blip([0.3, -0.2, 0.0], "min"), [0, 1, 0])


def test_learned_blip_rule_reads_blip_model():
    data = _one_stage([[0.3, 0, 1], [-0.2, 1, 0], [0.0, 0, 2]])
    model = LinearModel(SQUARED, ("prior_use",), 0.0, np.array([1.0]))
    rule = LearnedBlipRule((BlipStage(1, ("prior_use",), model),), Direction.MAXIMIZE)
    np.testing.assert_array_equal(rule.assign(data, 1), [1, 0, 0])


def test_rule_column_outside_history(tiny_two_stage):
    with pytest.raises(DataError, match="W3"):
        ThresholdRule("W3", ">", 0).assign(tiny_two_stage, 1)
    with pytest.raises(DataError, match="A1"):
        ThresholdRule("A1", ">", 0).assign(tiny_two_stage, 1)
    ThresholdRule("A1", ">", 0).assign(tiny_two_stage, 2)


def test_observed_and_sequence(tiny_two_stage):
    np.testing.assert_array_equal(ObservedRule().assign(tiny_two_stage, 2), [0, 1, 1])
    seq = parse_rule("static:1; observed")
    np.testing.assert_array_equal(seq.assign(tiny_two_stage, 1), [1, 1, 1])
    np.testing.assert_array_equal(seq.assign(tiny_two_stage, 2), [0, 1, 1])
    with pytest.raises(DataError):
        RuleSequence((StaticRule(0),)).assign(tiny_two_stage, 1)


def test_fixed_assignment_length_checked(tiny_two_stage):
    rule = FixedAssignmentRule((np.array([1, 0]), np.array([0, 0])))
    with pytest.raises(DataError):
        rule.assign(tiny_two_stage, 1)


@pytest.mark.parametrize(
    "text",
    ["static:0", "static:1", "observed", "threshold:W1:>:0", "threshold:W1:<=:0.5:0:1", "static:0;threshold:A1:==:1"],
)
def test_parse_and_round_trip(text, tiny_two_stage):
    rule = parse_rule(text)
    again = rule_from_dict(rule.to_dict())
    assert again == rule
    for t in (1, 2):
        try:
            expect = rule.assign(tiny_two_stage, t)
        except DataError:
            continue
        np.testing.assert_array_equal(again.assign(tiny_two_stage, t), expect)


@pytest.mark.parametrize("text", ["static:2", "threshold:W1:>", "threshold:W1:~:0", "sometimes"])
def test_parse_rejects(text):
    with pytest.raises(ValueError):
        parse_rule(text)


def test_direction_parse():
    assert Direction.parse("MAX") is Direction.MAXIMIZE
    assert Direction.parse("minimise") is Direction.MINIMIZE
    with pytest.raises(ValueError):
        Direction.parse("up")


blips = arrays(np.float64, st.integers(1, 30), elements=st.floats(-5, 5, allow_nan=False))


@given(blips)
def test_minimize_is_maximize_of_negated_blip(b):
    nonzero = b != 0
    lo = assign_from_blip(b, "min")
    hi = assign_from_blip(-b, "max")
    np.testing.assert_array_equal(lo[nonzero], hi[nonzero])
    assert set(np.unique(lo)) <= {0, 1}


@given(blips)
def test_apply_rule_is_pure(b):
    n = b.size
    data = LongitudinalDataset(np.column_stack([b, np.zeros(n), np.zeros(n)]), ("V", "A", "Y"), (("V",),), ("A",), "Y")
    model = LinearModel(SQUARED, ("V",), 0.0, np.array([1.0]))
    rule = LearnedBlipRule((BlipStage(1, ("V",), model),))
    first = apply_rule(rule, data, 1)
    np.testing.assert_array_equal(first, apply_rule(rule, data, 1))
    np.testing.assert_array_equal(first, (b > 0).astype(int))
