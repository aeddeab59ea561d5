"""Fitting and prediction for the built-in learners."""

from __future__ import annotations

from typing import Any, Sequence

import numpy as np
import pandas as pd
from scipy.special import expit, logit

from . import _kernels
from .specs import (
    BINOMIAL,
    SQUARED,
    GradientBoostedTrees,
    Intercept,
    LearnerSpec,
    Logistic,
    PenalizedLinear,
    check_family,
)

PROB_CLIP = 1e-6
LASSO_TOL = 1e-7
LASSO_MAX_SWEEPS = 10_000


class LayoutError(ValueError):
    """Prediction matrix does not match the fit-time feature layout."""


def _as_matrix(X, names: Sequence[str] | None) -> tuple[np.ndarray, tuple[str, ...]]:
    if isinstance(X, pd.DataFrame):
        cols = tuple(str(c) for c in X.columns)
        if names is not None:
            missing = [c for c in names if c not in X.columns]
            if missing:
                raise LayoutError(f"missing feature columns {missing}")
            return X.loc[:, list(names)].to_numpy(dtype=float), tuple(names)
        return X.to_numpy(dtype=float), cols
    arr = np.asarray(X, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:
        raise LayoutError("feature matrix must be two-dimensional")
    if names is None:
        names = tuple(f"x{j}" for j in range(arr.shape[1]))
    elif arr.shape[1] != len(names):
        raise LayoutError(
            f"expected {len(names)} feature columns {list(names)}, got {arr.shape[1]}"
        )
    return arr, tuple(names)


def expand_interactions(X: np.ndarray) -> np.ndarray:
    """Append all pairwise column products ``x_i * x_j`` (i < j)."""
    p = X.shape[1]
    if p < 2:
        return X
    i, j = np.triu_indices(p, k=1)
    return np.hstack([X, X[:, i] * X[:, j]])


def _standardize(X: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    mean = X.mean(axis=0) if X.shape[0] else np.zeros(X.shape[1])
    scale = X.std(axis=0) if X.shape[0] else np.ones(X.shape[1])
    # constant columns become all-zero and stay out of the fit
    scale = np.where(scale > 1e-12, scale, 1.0)
    Z = (X - mean) / scale
    Z[:, np.ptp(X, axis=0) == 0] = 0.0
    return Z, mean, scale


def _clip_prob(p: np.ndarray) -> np.ndarray:
    return np.clip(p, PROB_CLIP, 1 - PROB_CLIP)


class FittedModel:
    """Base for fitted learners: a feature layout, a loss family, a predictor."""

    kind = "base"

    def __init__(self, family: str, feature_names: Sequence[str], learner: str = ""):
        self.family = family
        self.feature_names = tuple(feature_names)
        self.learner = learner
        self.meta: dict[str, Any] = {}

    def predict(self, X) -> np.ndarray:
        arr, _ = _as_matrix(X, self.feature_names)
        eta = self._linear_predictor(arr)
        if self.family == BINOMIAL:
            return _clip_prob(expit(eta))
        return eta

    def _linear_predictor(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "family": self.family,
            "feature_names": list(self.feature_names),
            "learner": self.learner,
            **self._params(),
        }

    def _params(self) -> dict[str, Any]:
        return {}

    def __repr__(self) -> str:
        return f"<{type(self).__name__} {self.learner} on {list(self.feature_names)}>"


class InterceptModel(FittedModel):
    kind = "intercept"

    def __init__(self, family, feature_names, value: float, learner="intercept"):
        super().__init__(family, feature_names, learner)
        self.value = float(value)

    def _linear_predictor(self, X):
        return np.full(X.shape[0], self.value)

    def _params(self):
        return {"value": self.value}


class LinearModel(FittedModel):
    """``intercept + design(X) @ coef``; a logit for the binomial family."""

    kind = "linear"

    def __init__(
        self,
        family,
        feature_names,
        intercept: float,
        coef: np.ndarray,
        interactions: bool = False,
        x_mean: np.ndarray | None = None,
        x_scale: np.ndarray | None = None,
        learner: str = "",
    ):
        super().__init__(family, feature_names, learner)
        self.intercept = float(intercept)
        self.coef = np.asarray(coef, dtype=float)
        self.interactions = bool(interactions)
        self.x_mean = None if x_mean is None else np.asarray(x_mean, dtype=float)
        self.x_scale = None if x_scale is None else np.asarray(x_scale, dtype=float)

    def design(self, X: np.ndarray) -> np.ndarray:
        return expand_interactions(X) if self.interactions else X

    @property
    def coef_standardized(self) -> np.ndarray:
        return self.coef * self.x_scale

    def _linear_predictor(self, X):
        D = self.design(X)
        if D.shape[1] == 0:
            return np.full(X.shape[0], self.intercept)
        return self.intercept + D @ self.coef

    def _params(self):
        return {
            "intercept": self.intercept,
            "coef": self.coef.tolist(),
            "interactions": self.interactions,
            "x_mean": None if self.x_mean is None else self.x_mean.tolist(),
            "x_scale": None if self.x_scale is None else self.x_scale.tolist(),
        }


class TreeEnsembleModel(FittedModel):
    kind = "trees"

    def __init__(self, family, feature_names, base, features, thresholds, values, learner=""):
        super().__init__(family, feature_names, learner)
        self.base = float(base)
        self.features = np.asarray(features, dtype=np.int64)
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.values = np.asarray(values, dtype=float)

    @property
    def num_trees(self) -> int:
        return self.features.shape[0]

    def _linear_predictor(self, X):
        if self.num_trees == 0:
            return np.full(X.shape[0], self.base)
        return self.base + _kernels.predict_trees(
            np.ascontiguousarray(X), self.features, self.thresholds, self.values
        )

    def _params(self):
        return {
            "base": self.base,
            "features": self.features.tolist(),
            "thresholds": self.thresholds.tolist(),
            "values": self.values.tolist(),
        }


_KINDS = {
    "intercept": InterceptModel,
    "linear": LinearModel,
    "trees": TreeEnsembleModel,
}


def model_from_dict(obj: dict[str, Any]) -> FittedModel:
    obj = dict(obj)
    kind = obj.pop("kind")
    family = obj.pop("family")
    names = obj.pop("feature_names")
    learner = obj.pop("learner", "")
    if kind == "intercept":
        return InterceptModel(family, names, obj["value"], learner=learner)
    if kind == "linear":
        return LinearModel(
            family,
            names,
            obj["intercept"],
            np.asarray(obj["coef"], dtype=float),
            interactions=obj.get("interactions", False),
            x_mean=obj.get("x_mean"),
            x_scale=obj.get("x_scale"),
            learner=learner,
        )
    if kind == "trees":
        values = np.asarray(obj["values"], dtype=float)
        n_nodes = values.shape[1] if values.ndim == 2 else 1
        return TreeEnsembleModel(
            family,
            names,
            obj["base"],
            np.asarray(obj["features"], dtype=np.int64).reshape(-1, n_nodes),
            np.asarray(obj["thresholds"], dtype=float).reshape(-1, n_nodes),
            values.reshape(-1, n_nodes),
            learner=learner,
        )
    raise ValueError(f"unknown fitted model kind {kind!r}")


# --------------------------------------------------------------------------- fits


def _fit_intercept(spec, X, y, family, names):
    # a constant target is returned exactly; the float mean can drift by an ulp
    value = y[0] if np.all(y == y[0]) else y.mean()
    if family == BINOMIAL:
        value = logit(np.clip(value, PROB_CLIP, 1 - PROB_CLIP))
    return InterceptModel(family, names, value, learner=spec.name)


def lasso_path_point(gram: np.ndarray, corr: np.ndarray, lam: float) -> tuple[np.ndarray, int]:
    """Solve the covariance-form lasso by coordinate descent, then polish.

    The polish re-solves the stationarity equations on the active set and is
    kept only if it preserves signs and the inactive-set subgradient bound.
    """
    p = corr.shape[0]
    beta = np.zeros(p)
    if p == 0:
        return beta, 0
    sweeps = _kernels.lasso_coordinate_descent(
        np.ascontiguousarray(gram), corr.copy(), float(lam), LASSO_TOL, LASSO_MAX_SWEEPS, beta
    )
    active = np.flatnonzero(beta)
    if active.size:
        signs = np.sign(beta[active])
        try:
            sub = np.linalg.solve(gram[np.ix_(active, active)], corr[active] - lam * signs)
        except np.linalg.LinAlgError:
            return beta, sweeps
        if np.all(np.sign(sub) == signs):
            polished = np.zeros(p)
            polished[active] = sub
            grad = corr - gram @ polished
            inactive = np.ones(p, dtype=bool)
            inactive[active] = False
            if np.all(np.abs(grad[inactive]) <= lam + 1e-12):
                beta = polished
    return beta, sweeps


def _fit_penalized_linear(spec: PenalizedLinear, X, y, family, names):
    D = expand_interactions(X) if spec.interactions else X
    n = D.shape[0]
    Z, mean, scale = _standardize(D)
    ybar = y.mean()
    yc = y - ybar
    gram = Z.T @ Z / n
    corr = Z.T @ yc / n
    sweeps = 0
    if D.shape[1] == 0:
        beta = np.zeros(0)
    elif spec.penalty == "lasso":
        beta, sweeps = lasso_path_point(gram, corr, spec.lam)
    else:
        A = gram + spec.lam * np.eye(gram.shape[0])
        beta = np.linalg.lstsq(A, corr, rcond=None)[0]
        beta[np.diag(gram) == 0] = 0.0
    coef = beta / scale
    intercept = ybar - mean @ coef if coef.size else ybar
    model = LinearModel(family, names, intercept, coef, spec.interactions, mean, scale, spec.name)
    model.meta["sweeps"] = int(sweeps)
    return model


def _logistic_objective(eta, y, beta, lam):
    p = _clip_prob(expit(eta))
    loss = -np.mean(y * np.log(p) + (1 - y) * np.log1p(-p))
    return loss + 0.5 * lam * float(beta[1:] @ beta[1:])


def _fit_logistic(spec: Logistic, X, y, family, names):
    D0 = expand_interactions(X) if spec.interactions else X
    n = D0.shape[0]
    Z, mean, scale = _standardize(D0)
    D = np.hstack([np.ones((n, 1)), Z])
    k = D.shape[1]
    beta = np.zeros(k)
    beta[0] = logit(np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP))
    pen = np.full(k, spec.lam)
    pen[0] = 0.0
    eta = D @ beta
    obj = _logistic_objective(eta, y, beta, spec.lam)
    iters = 0
    for iters in range(1, 101):
        p = _clip_prob(expit(eta))
        grad = D.T @ (p - y) / n + pen * beta
        w = p * (1 - p)
        H = (D * w[:, None]).T @ D / n + np.diag(pen) + 1e-10 * np.eye(k)
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while True:
            cand = beta - t * step
            cand_eta = D @ cand
            cand_obj = _logistic_objective(cand_eta, y, cand, spec.lam)
            if cand_obj <= obj + 1e-15 or t < 1e-8:
                break
            t *= 0.5
        beta, eta, obj = cand, cand_eta, cand_obj
        if np.max(np.abs(t * step)) < 1e-10:
            break
    coef = beta[1:] / scale
    intercept = beta[0] - mean @ coef if coef.size else beta[0]
    model = LinearModel(family, names, intercept, coef, spec.interactions, mean, scale, spec.name)
    model.meta["iterations"] = iters
    return model


def _bin_features(X: np.ndarray, max_bins: int) -> tuple[np.ndarray, list[np.ndarray]]:
    bins = np.zeros(X.shape, dtype=np.int64)
    cuts = []
    for j in range(X.shape[1]):
        col = X[:, j]
        uniq = np.unique(col)
        if uniq.size <= max_bins:
            c = (uniq[:-1] + uniq[1:]) / 2.0
        else:
            c = np.unique(np.quantile(col, np.linspace(0, 1, max_bins + 1)[1:-1]))
        cuts.append(c)
        bins[:, j] = np.searchsorted(c, col, side="left")
    return bins, cuts


def _logloss(F, y):
    return float(_kernels.binomial_deviance(F, y))


def _fit_gbt(spec: GradientBoostedTrees, X, y, family, names):
    n, p = X.shape
    n_nodes = 2 ** (spec.max_depth + 1) - 1
    if family == BINOMIAL:
        base = float(logit(np.clip(y.mean(), PROB_CLIP, 1 - PROB_CLIP)))
    else:
        base = float(y.mean())
    features = np.full((spec.num_trees, n_nodes), -1, dtype=np.int64)
    thresholds = np.zeros((spec.num_trees, n_nodes))
    values = np.zeros((spec.num_trees, n_nodes))
    train_loss = []
    if spec.num_trees and p:
        bins, cuts = _bin_features(X, spec.max_bins)
        n_bins = np.array([c.size + 1 for c in cuts], dtype=np.int64)
        F = np.full(n, base)
        ones = np.ones(n)
        loss = _logloss(F, y) if family == BINOMIAL else None
        for m in range(spec.num_trees):
            if family == BINOMIAL:
                prob = expit(F)
                grad = prob - y
                hess = np.maximum(prob * (1 - prob), 1e-12)
            else:
                grad = F - y
                hess = ones
            feat, split, val, node_of = _kernels.grow_tree(
                bins, grad, hess, n_bins, spec.max_depth, spec.min_leaf_size
            )
            step = spec.learning_rate
            update = val[node_of]
            if family == BINOMIAL:
                # backtrack so the training deviance never increases
                new = _logloss(F + step * update, y)
                while new > loss and step > 1e-6:
                    step *= 0.5
                    new = _logloss(F + step * update, y)
                if new > loss:
                    step, new = 0.0, loss
                loss = new
            F = F + step * update
            features[m] = feat
            values[m] = step * val
            for k in np.flatnonzero(feat >= 0):
                thresholds[m, k] = cuts[feat[k]][split[k]]
            train_loss.append(loss if family == BINOMIAL else float(np.mean((y - F) ** 2)) / 2)
    elif spec.num_trees:
        features = features[:0]
        thresholds = thresholds[:0]
        values = values[:0]
    model = TreeEnsembleModel(family, names, base, features, thresholds, values, spec.name)
    model.meta["train_loss"] = train_loss
    return model


_FITTERS = {
    Intercept: _fit_intercept,
    PenalizedLinear: _fit_penalized_linear,
    Logistic: _fit_logistic,
    GradientBoostedTrees: _fit_gbt,
}


def fit(
    spec: LearnerSpec,
    X,
    y,
    family: str = SQUARED,
    feature_names: Sequence[str] | None = None,
) -> FittedModel:
    """Fit one learner by (penalized) empirical risk minimisation.

    Parameters
    ----------
    spec : LearnerSpec
        Learner class and hyperparameters.
    X : DataFrame or array, shape (n, p)
        Features. DataFrame column names become the model's layout.
    y : array, shape (n,)
        Target; must be 0/1 for the binomial family.
    family : {"squared", "binomial"}
    feature_names : optional names for an ndarray ``X``.
    """
    check_family(spec, family)
    arr, names = _as_matrix(X, feature_names)
    y = np.asarray(y, dtype=float).ravel()
    if arr.shape[0] != y.shape[0]:
        raise ValueError(f"X has {arr.shape[0]} rows but y has {y.shape[0]}")
    if y.shape[0] < 1:
        raise ValueError("cannot fit on zero rows")
    if not (np.all(np.isfinite(arr)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite values in learner inputs")
    if family == BINOMIAL and not np.all((y == 0) | (y == 1)):
        raise ValueError("binomial family requires a 0/1 target")
    return _FITTERS[type(spec)](spec, arr, y, family, names)


def predict(model: FittedModel, X) -> np.ndarray:
    return model.predict(X)
