"""Shared fixtures and the acceptance summary printed at the end of a run."""

import numpy as np
import pytest
from hypothesis import settings

from odtr.data import LongitudinalDataset

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: dict[int, str] = {}


def record_acceptance(number: int, ok: bool, detail: str) -> None:
    """Remember one pass/fail line; printed in the terminal summary."""
    ACCEPTANCE_LINES[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    print(ACCEPTANCE_LINES[number])


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])


def make_dataset(columns, values, covariates, treatments, outcome="Y"):
    return LongitudinalDataset(np.asarray(values, dtype=float), columns, covariates, treatments, outcome)


@pytest.fixture
def tiny_two_stage():
    """Three units with the benchmark's column layout."""
    values = [
        [0.1, -0.2, 1, 0.5, 0, 1.0],
        [-0.3, 0.4, 0, 0.25, 1, 2.0],
        [0.7, 0.0, 1, -0.4, 1, 0.5],
    ]
    return make_dataset(("W1", "W2", "A1", "W3", "A2", "Y"), values, (("W1", "W2"), ("W3",)), ("A1", "A2"))
