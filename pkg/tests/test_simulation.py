import numpy as np
import pandas as pd
import pytest
from scipy import integrate

from odtr import simulation as sim
from odtr.rules import StaticRule
from odtr.simulation import (
    SimConfig,
    closed_form_true_value,
    expected_positive_part,
    generate_appendix_dgm,
    oracle_true_value,
    outcome_mean,
    run_replications,
    write_results,
)
from helpers import FAST


def test_untreated_units_have_fixed_w3():
    data = generate_appendix_dgm(2000, 0)
    a1 = data.column("A1")
    assert np.all(data.column("W3")[a1 == 0] == 0.25)
    w3 = data.column("W3")[a1 == 1]
    assert w3.min() >= -1.0 and w3.max() <= 1.5


def test_uniform_moments():
    W1 = generate_appendix_dgm(1_000_000, 1).column("W1")
    se_mean = np.sqrt(1 / 3 / W1.size)
    se_var = np.sqrt((1 / 5 - 1 / 9) / W1.size)
    assert abs(W1.mean()) < 3 * se_mean
    assert abs(np.mean(W1**2) - 1 / 3) < 3 * se_var


def test_outcome_mean_at_reference_point():
    assert outcome_mean(0, 0, 0, 0.25, 0) == pytest.approx(0.4)
    # A2 has partial effect 0.08 A1 - 0.1 whatever W3 is
    for w3 in (-1.0, 0.25, 1.5):
        assert outcome_mean(0.3, -0.2, 1, w3, 1) - outcome_mean(0.3, -0.2, 1, w3, 0) == pytest.approx(-0.02)


def test_closed_form_matches_numerical_integration():
    f = lambda w2, w1: max(0.0, -0.4 - 8 * w1 - 2 * w2) / 4
    val, _ = integrate.dblquad(f, -1, 1, -1, 1, epsabs=1e-11)
    assert closed_form_true_value() == pytest.approx(0.4 + val, abs=1e-8)
    assert closed_form_true_value() == pytest.approx(2.2466667, abs=1e-6)


@pytest.mark.parametrize("c, a, b", [(0.3, 1.0, 2.0), (-1.0, 0.5, 0.7), (5.0, 1.0, 1.0), (-5.0, 1.0, 1.0)])
def test_expected_positive_part_cases(c, a, b):
    f = lambda u2, u1: max(0.0, c + a * u1 + b * u2) / 4
    val, _ = integrate.dblquad(f, -1, 1, -1, 1, epsabs=1e-11)
    assert expected_positive_part(c, a, b) == pytest.approx(val, abs=1e-7)


def test_constant_zero_rule_value():
    v = oracle_true_value(1_000_000, seed=2, rule=StaticRule(0))
    assert v == pytest.approx(0.4, abs=3 * 1.5 * np.sqrt(1 / 3) / 1000)


def test_monte_carlo_oracle_close_to_closed_form():
    assert oracle_true_value(1_000_000, seed=3) == pytest.approx(closed_form_true_value(), abs=0.005)


def _small_cfg(**kw):
    base = dict(sample_sizes=(200,), n_replicates=4, seed=5, learners=FAST)
    base.update(kw)
    return SimConfig(**base)


def test_replications_deterministic_and_thread_independent():
    a = run_replications(_small_cfg())
    b = run_replications(_small_cfg())
    c = run_replications(_small_cfg(threads=2))
    pd.testing.assert_frame_equal(a.table, b.table)
    pd.testing.assert_frame_equal(a.replicates, c.replicates)
    row = a.row(200)
    assert 0 <= row["coverage"] <= 1 and row["replicates"] == 4
    assert row["sqrt_n_abs_bias"] == pytest.approx(np.sqrt(200) * row["abs_bias"])


def test_failures_are_counted(monkeypatch):
    real = sim.learn_odtr

    def flaky(data, *args, **kw):
        if data.n_units == 200 and flaky.calls == 1:
            flaky.calls += 1
            raise ValueError("boom")
        flaky.calls += 1
        return real(data, *args, **kw)

    flaky.calls = 0
    monkeypatch.setattr(sim, "learn_odtr", flaky)
    m = run_replications(_small_cfg(n_replicates=3))
    row = m.row(200)
    assert row["failed"] == 1 and row["replicates"] == 2
    assert m.replicates.loc[1, "error"] == "ValueError: boom"


def test_config_validation():
    for bad in (dict(n_replicates=0), dict(sample_sizes=(0,)), dict(sample_sizes=()), dict(threads=0)):
        with pytest.raises(ValueError):
            _small_cfg(**bad)


def test_results_files(tmp_path):
    m = run_replications(_small_cfg(n_replicates=2))
    paths = write_results(m, tmp_path, {"seed": 5})
    table = pd.read_csv(paths[0])
    assert list(table.columns[:5]) == ["n", "psi_hat", "abs_bias", "sqrt_n_abs_bias", "coverage"]
    assert '"seed": 5' in paths[1].read_text()
