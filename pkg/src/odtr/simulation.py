"""Two-stage simulation benchmark: data generation, oracle value and replication study."""

from __future__ import annotations

import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit

from .config import LearnerConfig
from .data import LongitudinalDataset
from .evaluation import sdr_policy_value
from .learners import SQUARED, LinearModel, seed_rng
from .longitudinal import learn_odtr
from .rules import BlipStage, Direction, LearnedBlipRule, StaticRule, TreatmentRule

COLUMNS = ("W1", "W2", "A1", "W3", "A2", "Y")
COVARIATES = (("W1", "W2"), ("W3",))
TREATMENTS = ("A1", "A2")
OUTCOME = "Y"
RULE_COVARIATES = (("W1", "W2"), ("W1", "W2", "A1", "W3"))

STAGE1_BLIP = (-0.4, {"W1": -8.0, "W2": -2.0})
STAGE2_BLIP = (-0.1, {"A1": 0.08})


def outcome_mean(W1, W2, A1, W3, A2):
    """Conditional mean of Y, term by term as the benchmark states it.

    The two A2*W3 terms cancel and -4*A1*W1 appears twice.
    """
    return (
        0.4
        - 0.4 * A1
        - A2 * W3
        - 4 * A1 * W1
        + 0.08 * A1 * A2
        + A2 * W3
        - 4 * A1 * W1
        - 2 * A1 * W2
        - 0.1 * A2
        + 1.5 * W1
    )


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, np.random.SeedSequence):
        return np.random.default_rng(seed)
    return np.random.default_rng(int(seed))


def generate_appendix_dgm(n: int, seed=0) -> LongitudinalDataset:
    """Draw n units with columns W1, W2, A1, W3, A2, Y.

    W3 = 1.25 * A1 * U(-1, 1) + 0.25, so untreated units have W3 = 0.25.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = _as_rng(seed)
    W1 = rng.uniform(-1, 1, n)
    W2 = rng.uniform(-1, 1, n)
    A1 = (rng.random(n) < expit(0.5 - 1.3 * W1 + 0.4 * W2)).astype(float)
    W3 = 1.25 * A1 * rng.uniform(-1, 1, n) + 0.25
    A2 = (rng.random(n) < expit(0.5 + 0.4 * A1 - 1.5 * W3)).astype(float)
    Y = rng.normal(outcome_mean(W1, W2, A1, W3, A2), 1.0)
    values = np.column_stack([W1, W2, A1, W3, A2, Y])
    return LongitudinalDataset(values, COLUMNS, COVARIATES, TREATMENTS, OUTCOME)


def _linear_blip(columns, intercept, coefs) -> LinearModel:
    coef = np.array([coefs.get(c, 0.0) for c in columns])
    return LinearModel(SQUARED, columns, intercept, coef, learner="analytic")


def analytic_optimal_rule() -> LearnedBlipRule:
    """True optimal rule: d2 = I(0.08 A1 - 0.1 > 0) = 0, d1 = I(-0.4 - 8 W1 - 2 W2 > 0)."""
    stages = (
        BlipStage(1, RULE_COVARIATES[0], _linear_blip(RULE_COVARIATES[0], *STAGE1_BLIP)),
        BlipStage(2, RULE_COVARIATES[1], _linear_blip(RULE_COVARIATES[1], *STAGE2_BLIP)),
    )
    return LearnedBlipRule(stages, Direction.MAXIMIZE)


def expected_positive_part(c: float, a: float, b: float) -> float:
    """E[max(0, c + a U1 + b U2)] for independent U1, U2 ~ U(-1, 1), a, b != 0.

    Integrating the ramp twice gives a second difference of x_+^3 / 6.
    """
    a, b = abs(a), abs(b)
    if a == 0 or b == 0:
        raise ValueError("coefficients must be nonzero")

    def k(x):
        return max(x, 0.0) ** 3 / 6.0

    return (k(c + a + b) - k(c + a - b) - k(c - a + b) + k(c - a - b)) / (4 * a * b)


def closed_form_true_value() -> float:
    """Value of the optimal rule: 0.4 + E[max(0, -0.4 - 8 W1 - 2 W2)] (about 2.2467)."""
    c, coefs = STAGE1_BLIP
    return 0.4 + expected_positive_part(c, coefs["W1"], coefs["W2"])


def oracle_true_value(
    draws: int = 10_000_000,
    seed=0,
    rule: TreatmentRule | None = None,
    chunk: int = 1_000_000,
) -> float:
    """Monte Carlo value E[Y_D] under ``rule`` (default: the analytic optimum).

    Uses the conditional mean of Y, so only covariates are simulated.
    """
    rule = rule or analytic_optimal_rule()
    rng = _as_rng(seed)
    total = 0.0
    done = 0
    while done < draws:
        m = min(chunk, draws - done)
        W1 = rng.uniform(-1, 1, m)
        W2 = rng.uniform(-1, 1, m)
        U = rng.uniform(-1, 1, m)
        zeros = np.zeros(m)
        values = np.column_stack([W1, W2, zeros, zeros + 0.25, zeros, zeros])
        data = LongitudinalDataset(values, COLUMNS, COVARIATES, TREATMENTS, OUTCOME)
        A1 = rule.assign(data, 1).astype(float)
        W3 = 1.25 * A1 * U + 0.25
        values[:, 2] = A1
        values[:, 3] = W3
        data = LongitudinalDataset(values, COLUMNS, COVARIATES, TREATMENTS, OUTCOME)
        A2 = rule.assign(data, 2).astype(float)
        total += float(outcome_mean(W1, W2, A1, W3, A2).sum())
        done += m
    return total / draws


# --------------------------------------------------------------------- study


@dataclass(frozen=True)
class SimConfig:
    sample_sizes: tuple = (500,)
    n_replicates: int = 1000
    seed: int = 0
    learners: LearnerConfig = field(default_factory=LearnerConfig)
    oracle_draws: int = 0
    alpha: float = 0.05
    threads: int = 1

    def __post_init__(self):
        if self.n_replicates < 1:
            raise ValueError("n_replicates must be >= 1")
        if not self.sample_sizes or any(int(n) < 1 for n in self.sample_sizes):
            raise ValueError("sample sizes must be positive")
        if self.oracle_draws < 0:
            raise ValueError("oracle_draws must be >= 0")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")

    def to_dict(self) -> dict[str, Any]:
        return {
            "sample_sizes": list(self.sample_sizes),
            "n_replicates": self.n_replicates,
            "seed": self.seed,
            "learners": self.learners.to_dict(),
            "oracle_draws": self.oracle_draws,
            "alpha": self.alpha,
        }


@dataclass
class SimMetrics:
    """Per-sample-size summary plus the per-replicate records."""

    table: pd.DataFrame
    replicates: pd.DataFrame
    truth: float
    truth_monte_carlo: float | None = None
    config: dict = field(default_factory=dict)

    def row(self, n: int) -> dict[str, Any]:
        return self.table.set_index("n").loc[n].to_dict()

    def to_dict(self) -> dict[str, Any]:
        return {
            "truth": self.truth,
            "truth_monte_carlo": self.truth_monte_carlo,
            "table": self.table.to_dict(orient="records"),
            "config": self.config,
        }


def replicate_seed(master: int, n: int, rep: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(master), spawn_key=(int(n), int(rep)))


def run_replicate(n: int, rep: int, cfg: SimConfig, truth: float) -> dict[str, Any]:
    ss = replicate_seed(cfg.seed, n, rep)
    data_ss, fit_ss = ss.spawn(2)
    fit_seed = int(fit_ss.generate_state(1)[0])
    record: dict[str, Any] = {"n": n, "rep": rep}
    try:
        data = generate_appendix_dgm(n, data_ss)
        fitted = learn_odtr(data, RULE_COVARIATES, cfg.learners, Direction.MAXIMIZE, seed=fit_seed)
        est = sdr_policy_value(
            data,
            fitted.crossfit_rule(),
            cfg.learners,
            seed=fit_seed,
            alpha=cfg.alpha,
            propensities=fitted.training_propensities(),
        )
        optimum = analytic_optimal_rule()
        record.update(
            psi_hat=est.psi_hat,
            se=est.se,
            ci_lower=est.ci[0],
            ci_upper=est.ci[1],
            covered=bool(est.ci[0] <= truth <= est.ci[1]),
            stage2_zero_fraction=float(1 - fitted.stages[1].assignment.mean()),
            stage1_agreement=float(np.mean(fitted.stages[0].assignment == optimum.assign(data, 1))),
            error="",
        )
    except Exception as exc:  # recorded and counted, never dropped silently
        record.update(error=f"{type(exc).__name__}: {exc}")
    return record


def _run_chunk(args):
    n, reps, cfg, truth = args
    return [run_replicate(n, r, cfg, truth) for r in reps]


def run_replications(cfg: SimConfig, progress=None) -> SimMetrics:
    """Replicate learn-then-evaluate on fresh draws for each sample size.

    Results depend only on ``cfg`` (not on ``threads``): every replicate's
    randomness comes from (seed, n, replicate index).
    """
    truth = closed_form_true_value()
    truth_mc = oracle_true_value(cfg.oracle_draws, seed=seed_rng(cfg.seed, (0,))) if cfg.oracle_draws else None
    records = []
    for n in cfg.sample_sizes:
        n = int(n)
        reps = list(range(cfg.n_replicates))
        start = time.time()
        if cfg.threads > 1:
            chunks = [reps[i :: cfg.threads * 4] for i in range(cfg.threads * 4)]
            with ProcessPoolExecutor(cfg.threads) as pool:
                for out in pool.map(_run_chunk, [(n, c, cfg, truth) for c in chunks if c]):
                    records.extend(out)
        else:
            for r in reps:
                records.append(run_replicate(n, r, cfg, truth))
                if progress is not None:
                    progress(n, r + 1, cfg.n_replicates, time.time() - start)
    reps_df = pd.DataFrame.from_records(records).sort_values(["n", "rep"], kind="stable").reset_index(drop=True)
    table = summarize(reps_df, truth)
    return SimMetrics(table, reps_df, truth, truth_mc, cfg.to_dict())


def summarize(reps: pd.DataFrame, truth: float) -> pd.DataFrame:
    rows = []
    for n, grp in reps.groupby("n", sort=True):
        ok = grp[grp["error"] == ""]
        psi = float(ok["psi_hat"].mean()) if len(ok) else math.nan
        bias = abs(psi - truth)
        rows.append(
            {
                "n": int(n),
                "psi_hat": psi,
                "abs_bias": bias,
                "sqrt_n_abs_bias": math.sqrt(n) * bias,
                "coverage": float(ok["covered"].mean()) if len(ok) else math.nan,
                "replicates": int(len(ok)),
                "failed": int(len(grp) - len(ok)),
                "mean_se": float(ok["se"].mean()) if len(ok) else math.nan,
                "sd_psi_hat": float(ok["psi_hat"].std(ddof=1)) if len(ok) > 1 else math.nan,
            }
        )
    return pd.DataFrame(rows)


def write_results(metrics: SimMetrics, out_dir: str | Path, provenance: dict | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "simulation_results.csv"
    json_path = out / "simulation_results.json"
    reps_path = out / "simulation_replicates.csv"
    metrics.table.to_csv(csv_path, index=False, float_format="%.6f")
    metrics.replicates.to_csv(reps_path, index=False, float_format="%.6f")
    payload = metrics.to_dict()
    if provenance:
        payload["provenance"] = provenance
    json_path.write_text(json.dumps(payload, indent=2))
    return [csv_path, json_path, reps_path]


def default_threads() -> int:
    return max(1, os.cpu_count() or 1)
