"""Doubly robust learning and evaluation of optimal dynamic treatment rules."""

from .config import LearnerConfig
from .data import DataError, HistoryView, LongitudinalDataset, Schema, history_at, load_csv, parse_schema
from .evaluation import (
    ContrastError,
    ContrastEstimate,
    PolicyValueEstimate,
    difference_contrast,
    rr_contrast,
    sdr_policy_value,
)
from .longitudinal import FittedODTR, StageCache, learn_odtr, pseudo_outcome_update, sequential_aipw_transform
from .rules import (
    Direction,
    FixedAssignmentRule,
    LearnedBlipRule,
    ObservedRule,
    RuleSequence,
    StaticRule,
    ThresholdRule,
    TreatmentRule,
    apply_rule,
    assign_from_blip,
)
from .single import (
    FittedODTRStage,
    NuisanceEstimates,
    aipw_transform,
    estimate_nuisances,
    fit_blip,
    learn_odtr_single,
)

__version__ = "0.1.0"
