"""Small DGMs and fast learner settings shared by the tests."""

import numpy as np
from scipy.special import expit

from odtr.config import LearnerConfig
from odtr.data import LongitudinalDataset
from odtr.learners import Intercept, Logistic, PenalizedLinear, SuperLearnerSpec
from odtr.longitudinal import StageCache
from odtr.single import NuisanceEstimates

FAST = LearnerConfig(
    outcome=PenalizedLinear(lam=0.0, penalty="ridge", interactions=True),
    propensity=Logistic(lam=0.0),
    blip=PenalizedLinear(lam=0.0, penalty="ridge"),
)


def single_stage(n, seed, cate=lambda w1, w2: w1, noise=1.0, prop=lambda w1, w2: 0.5 * w2):
    """W1, W2 ~ U(-1, 1); A ~ Bern(expit(prop)); Y = W2 + A * cate + noise."""
    rng = np.random.default_rng(seed)
    W1 = rng.uniform(-1, 1, n)
    W2 = rng.uniform(-1, 1, n)
    A = (rng.random(n) < expit(prop(W1, W2))).astype(float)
    Y = W2 + A * cate(W1, W2) + noise * rng.normal(size=n)
    return LongitudinalDataset(np.column_stack([W1, W2, A, Y]), ("W1", "W2", "A", "Y"), (("W1", "W2"),), ("A",), "Y")


def confounded_ate(n, seed):
    """tau = 1 DGM with ATE exactly 1 and strong confounding through X1."""
    rng = np.random.default_rng(seed)
    X1 = rng.uniform(-1, 1, n)
    X2 = rng.uniform(-1, 1, n)
    A = (rng.random(n) < expit(1.5 * X1 - 0.5 * X2)).astype(float)
    Y = 1.0 + 2.0 * X1 - X2 + A * (1.0 + X2 + 0.5 * X1) + rng.normal(size=n)
    return LongitudinalDataset(np.column_stack([X1, X2, A, Y]), ("X1", "X2", "A", "Y"), (("X1", "X2"),), ("A",), "Y")


CORRECT_Q = PenalizedLinear(lam=0.0, penalty="ridge", interactions=True)
CORRECT_G = Logistic(lam=0.0)
ONLY_INTERCEPT = Intercept()
SMALL_SL = SuperLearnerSpec((Intercept(), PenalizedLinear(lam=0.001)))


# ------------------------------------------------------------- oracles


def _standardized(X):
    sd = X.std(axis=0)
    return (X - X.mean(axis=0)) / sd, sd


def _lasso_objective(Z, y, b, lam):
    r = (y - y.mean()) - Z @ b
    return 0.5 * np.mean(r**2) + lam * np.abs(b).sum()


def _kkt_residual(model, X, y, lam):
    """Largest violation of the lasso subgradient conditions on standardized features."""
    Z, sd = _standardized(X)
    b = model.coef * sd
    grad = -Z.T @ ((y - y.mean()) - Z @ b) / len(y)
    active = b != 0
    viol = np.zeros_like(b)
    viol[active] = np.abs(grad[active] + lam * np.sign(b[active]))
    viol[~active] = np.maximum(np.abs(grad[~active]) - lam, 0.0)
    return float(viol.max()) if viol.size else 0.0


def _cache(t, a, q1, q0, g, assignment=None):
    a = np.asarray(a, float)
    q1, q0, g = (np.asarray(v, float) for v in (q1, q0, g))
    nuis = NuisanceEstimates(q1, q0, np.where(a == 1, q1, q0), g, g, np.zeros(a.size, bool))
    return StageCache(t, a, nuis, None if assignment is None else np.asarray(assignment))


def random_caches(rng, n, tau):
    caches = {}
    for t in range(1, tau + 1):
        caches[t] = _cache(
            t,
            rng.integers(0, 2, n),
            rng.normal(size=n),
            rng.normal(size=n),
            rng.uniform(0.05, 0.95, n),
            rng.integers(0, 2, n),
        )
    return caches, rng.normal(size=n)


def brute_force(t, caches, y, cap=None):
    """Literal double sum: sum over s of the weighted increments, then the contrast."""
    tau = max(caches)
    cur = caches[t]
    n = y.size
    out = np.empty(n)
    for i in range(n):
        total = 0.0
        for s in range(t, tau + 1):
            w = (2 * cur.a[i] - 1) / cur.nuis.g[i]
            mag = 1.0 / cur.nuis.g[i]
            for k in range(t + 1, s + 1):
                ind = 1.0 if caches[k].a[i] == caches[k].assignment[i] else 0.0
                w *= ind / caches[k].nuis.g[i]
                mag *= ind / caches[k].nuis.g[i]
            if cap is not None and mag > cap:
                w = (2 * cur.a[i] - 1) * cap
            nxt = y[i] if s == tau else (caches[s + 1].nuis.q1[i] if caches[s + 1].assignment[i] == 1 else caches[s + 1].nuis.q0[i])
            total += w * (nxt - caches[s].nuis.qa[i])
        out[i] = total + cur.nuis.q1[i] - cur.nuis.q0[i]
    return out
