"""Command-line entry point: ``odtr {simulate,learn,evaluate,compare,generate}``.

Settings come from an optional JSON ``--config`` file; command-line flags
override it. Every JSON report embeds the resolved configuration and seed.
On failure a JSON error object is printed to stderr and the exit code is
nonzero.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import LearnerConfig
from .data import DataError, LongitudinalDataset, history_at, load_csv, load_schema
from .evaluation import ContrastError, difference_contrast, rr_contrast, sdr_policy_value
from .longitudinal import StageError, _json_default, learn_odtr, load_rule, save_rule
from .rules import Direction, TreatmentRule, parse_rule
from .simulation import (
    COLUMNS,
    RULE_COVARIATES,
    SimConfig,
    analytic_optimal_rule,
    default_threads,
    generate_appendix_dgm,
    run_replications,
    write_results,
)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_RUNTIME = 4

DEFAULTS: dict[str, Any] = {
    "seed": 0,
    "alpha": 0.05,
    "direction": "max",
    "folds": None,
    "threads": None,
    "n": [500],
    "reps": 1000,
    "oracle_draws": 0,
    "rule": None,
    "rules": None,
    "reference": None,
    "scale": "rr",
    "learners": {},
}


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON run configuration; flags override its values")
    common.add_argument("--seed", type=int, help="master seed for all randomness")
    common.add_argument("--out", help="output file (learn/evaluate/compare) or directory (simulate)")
    common.add_argument("--alpha", type=float, help="CI level is 1 - alpha")
    common.add_argument("--folds", type=int, help="cross-fitting folds (default depends on n)")
    common.add_argument("--direction", choices=["max", "min"], help="maximise or minimise the outcome")
    common.add_argument("--threads", type=int, help="worker processes (default: available cores)")

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="wide CSV, one row per unit")
    data.add_argument("--schema", help="JSON column-role map with optional rule_covariates")

    p = argparse.ArgumentParser(prog="odtr", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="replication study on the two-stage benchmark")
    s.add_argument("--n", type=int, nargs="+", help="sample sizes")
    s.add_argument("--reps", type=int, help="replicates per sample size")
    s.add_argument("--oracle-draws", type=int, dest="oracle_draws", help="Monte Carlo draws for the oracle value")

    sub.add_parser("learn", parents=[common, data], help="learn an optimal rule and save it as JSON")

    e = sub.add_parser("evaluate", parents=[common, data], help="estimate a rule's policy value")
    e.add_argument("--rule", help="rule spec: static:0, observed, threshold:..., learned, optimal, or a JSON file")

    c = sub.add_parser("compare", parents=[common, data], help="contrast rules against a reference rule")
    c.add_argument("--rules", nargs="+", help="rule specs to contrast")
    c.add_argument("--reference", help="reference rule spec")
    c.add_argument("--scale", choices=["rr", "diff"], help="risk ratio or difference")

    g = sub.add_parser("generate", parents=[common], help="write benchmark data and its schema")
    g.add_argument("--n", type=int, nargs=1, help="number of units")
    return p


def resolve_config(args: argparse.Namespace) -> dict[str, Any]:
    """Defaults, then the JSON config file, then explicit flags."""
    cfg = dict(DEFAULTS)
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {args.config}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = sorted(set(loaded) - set(DEFAULTS) - {"data", "schema", "out"})
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
        cfg.update(loaded)
    for key, value in vars(args).items():
        if key in ("command", "config") or value is None:
            continue
        cfg[key] = value
    cfg["command"] = args.command
    if cfg["threads"] is None:
        cfg["threads"] = default_threads()
    if isinstance(cfg["n"], int):
        cfg["n"] = [cfg["n"]]
    if isinstance(cfg["rules"], str):
        cfg["rules"] = [cfg["rules"]]
    _validate(cfg)
    return cfg


def _validate(cfg: dict[str, Any]) -> None:
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0:
        raise ConfigError("seed must be a non-negative integer")
    if not 0 < float(cfg["alpha"]) < 1:
        raise ConfigError("alpha must lie in (0, 1)")
    if cfg["direction"] not in ("max", "min"):
        raise ConfigError("direction must be 'max' or 'min'")
    if int(cfg["threads"]) < 1:
        raise ConfigError("threads must be >= 1")
    if cfg["folds"] is not None and int(cfg["folds"]) < 2:
        raise ConfigError("folds must be >= 2")
    if cfg["command"] in ("simulate", "generate") and any(int(n) < 1 for n in cfg["n"]):
        raise ConfigError("--n values must be >= 1")
    if cfg["command"] == "simulate" and int(cfg["reps"]) < 1:
        raise ConfigError("--reps must be >= 1")
    if cfg["command"] in ("learn", "evaluate", "compare"):
        for key in ("data", "schema"):
            if not cfg.get(key):
                raise ConfigError(f"--{key} is required for {cfg['command']}")
    if cfg["command"] == "evaluate" and not cfg["rule"]:
        raise ConfigError("--rule is required for evaluate")
    if cfg["command"] == "compare" and (not cfg["rules"] or not cfg["reference"]):
        raise ConfigError("--rules and --reference are required for compare")
    if not cfg.get("out"):
        raise ConfigError("--out is required")


def learner_config(cfg: dict[str, Any]) -> LearnerConfig:
    try:
        learners = LearnerConfig.from_dict(cfg["learners"])
        return learners.with_overrides(folds=cfg["folds"])
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigError(f"bad learner configuration: {exc}") from exc


def _provenance(cfg: dict[str, Any], learners: LearnerConfig | None = None) -> dict[str, Any]:
    resolved = {k: v for k, v in cfg.items() if k != "threads"}
    if learners is not None:
        resolved["learners"] = learners.to_dict()
    return {"version": __version__, "seed": cfg["seed"], "config": resolved}


def _write_json(path: str | Path, payload: dict[str, Any]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, default=_json_default))
    return path


# ------------------------------------------------------------------- inputs


def _load(cfg):
    schema = load_schema(cfg["schema"])
    data = load_csv(cfg["data"], schema)
    rule_cov = schema.rule_covariates
    if rule_cov is None:
        rule_cov = tuple(history_at(data, t).columns for t in range(1, data.tau + 1))
    return data, rule_cov


def resolve_rule(
    spec: str,
    data: LongitudinalDataset,
    rule_cov,
    learners: LearnerConfig,
    cfg: dict[str, Any],
    cache: dict[str, Any],
) -> tuple[TreatmentRule, str]:
    """Turn a rule spec into a rule and a display name.

    ``learned`` learns on ``data`` and evaluates the cross-fitted
    assignments; ``optimal`` is the benchmark's analytic rule; a path to an
    existing JSON file loads a saved rule; anything else is a compact rule
    string.
    """
    if spec == "learned":
        if "learned" not in cache:
            fitted = learn_odtr(data, rule_cov, learners, cfg["direction"], seed=cfg["seed"])
            cache["learned"] = fitted
            cache["propensities"] = fitted.training_propensities()
        return cache["learned"].crossfit_rule(), "learned"
    if spec == "optimal":
        if tuple(data.columns) != COLUMNS:
            raise DataError(f"the 'optimal' rule needs the benchmark columns {list(COLUMNS)}")
        return analytic_optimal_rule(), "optimal"
    if spec.endswith(".json") or Path(spec).is_file():
        if not Path(spec).is_file():
            raise DataError(f"rule file not found: {spec}")
        return load_rule(spec), Path(spec).stem
    try:
        return parse_rule(spec), spec
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _evaluate(spec, data, rule_cov, learners, cfg, cache):
    rule, name = resolve_rule(spec, data, rule_cov, learners, cfg, cache)
    for t in range(1, data.tau + 1):
        rule.assign(data, t)
    return sdr_policy_value(
        data,
        rule,
        learners,
        seed=cfg["seed"],
        alpha=float(cfg["alpha"]),
        propensities=cache.get("propensities"),
        rule_name=name,
    )


# ----------------------------------------------------------------- commands


def cmd_simulate(cfg: dict[str, Any]) -> list[Path]:
    learners = learner_config(cfg)
    sim = SimConfig(
        sample_sizes=tuple(int(n) for n in cfg["n"]),
        n_replicates=int(cfg["reps"]),
        seed=cfg["seed"],
        learners=learners,
        oracle_draws=int(cfg["oracle_draws"]),
        alpha=float(cfg["alpha"]),
        threads=int(cfg["threads"]),
    )

    def progress(n, done, total, elapsed):
        if done % max(1, total // 10) == 0 or done == total:
            print(f"n={n}: {done}/{total} replicates ({elapsed:.0f}s)", file=sys.stderr)

    metrics = run_replications(sim, progress=progress)
    return write_results(metrics, cfg["out"], _provenance(cfg, learners))


def cmd_learn(cfg: dict[str, Any]) -> list[Path]:
    learners = learner_config(cfg)
    data, rule_cov = _load(cfg)
    fitted = learn_odtr(data, rule_cov, learners, cfg["direction"], seed=cfg["seed"])
    extra = {
        "n_units": data.n_units,
        "tau": data.tau,
        "assignment_fractions": {str(s.t): float(np.mean(s.assignment)) for s in fitted.stages},
        "provenance": _provenance(cfg, learners),
    }
    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    save_rule(fitted, out, extra)
    return [out]


def cmd_evaluate(cfg: dict[str, Any]) -> list[Path]:
    learners = learner_config(cfg)
    data, rule_cov = _load(cfg)
    est = _evaluate(cfg["rule"], data, rule_cov, learners, cfg, {})
    payload = {"estimate": est.to_dict(), "provenance": _provenance(cfg, learners)}
    return [_write_json(cfg["out"], payload)]


def cmd_compare(cfg: dict[str, Any]) -> list[Path]:
    learners = learner_config(cfg)
    data, rule_cov = _load(cfg)
    cache: dict[str, Any] = {}
    if "learned" in [cfg["reference"], *cfg["rules"]]:
        # learn first so every rule reuses the same propensity fits
        resolve_rule("learned", data, rule_cov, learners, cfg, cache)
    ref = _evaluate(cfg["reference"], data, rule_cov, learners, cfg, cache)
    alpha = float(cfg["alpha"])
    results = []
    for spec in cfg["rules"]:
        est = _evaluate(spec, data, rule_cov, learners, cfg, cache)
        if cfg["scale"] == "rr":
            contrast = rr_contrast(est, ref, alpha).to_dict()
        else:
            contrast = difference_contrast(est, ref, alpha).to_dict()
        results.append({"estimate": est.to_dict(), "contrast": contrast})
    payload = {
        "scale": cfg["scale"],
        "reference": ref.to_dict(),
        "comparisons": results,
        "provenance": _provenance(cfg, learners),
    }
    return [_write_json(cfg["out"], payload)]


def cmd_generate(cfg: dict[str, Any]) -> list[Path]:
    n = int(cfg["n"][0])
    data = generate_appendix_dgm(n, np.random.SeedSequence(cfg["seed"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / "data.csv"
    schema_path = out / "schema.json"
    frame = data.frame()
    frame.insert(0, "id", np.arange(1, n + 1))
    frame.to_csv(csv_path, index=False, float_format="%.17g")
    roles: dict[str, Any] = {"id": "id", "W1": {"covariate": 1}, "W2": {"covariate": 1}}
    roles.update({"A1": {"treatment": 1}, "W3": {"covariate": 2}, "A2": {"treatment": 2}, "Y": "outcome"})
    schema = {"columns": roles, "rule_covariates": {str(t): list(v) for t, v in enumerate(RULE_COVARIATES, 1)}}
    _write_json(schema_path, schema)
    return [csv_path, schema_path]


COMMANDS = {
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "compare": cmd_compare,
    "generate": cmd_generate,
}


def _error(kind: str, exc: BaseException, code: int) -> int:
    payload: dict[str, Any] = {"error": kind, "message": str(exc)}
    if isinstance(exc, StageError):
        payload["time_point"] = exc.t
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        written = COMMANDS[cfg["command"]](cfg)
    except ConfigError as exc:
        return _error("config", exc, EXIT_CONFIG)
    except (DataError, FileNotFoundError) as exc:
        return _error("data", exc, EXIT_DATA)
    except ContrastError as exc:
        return _error("contrast", exc, EXIT_RUNTIME)
    except (StageError, ValueError, np.linalg.LinAlgError) as exc:
        return _error("runtime", exc, EXIT_RUNTIME)
    print(json.dumps({"written": [str(p) for p in written]}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
