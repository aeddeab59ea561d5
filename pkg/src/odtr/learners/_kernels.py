"""Compiled inner loops for the built-in learners."""

import numpy as np
from numba import njit


@njit(cache=True)
def lasso_coordinate_descent(gram, corr, lam, tol, max_sweeps, beta):
    """Cyclic coordinate descent on the covariance form of the lasso.

    Minimises ``0.5 * b' G b - c' b + lam * |b|_1`` in place on ``beta``.
    Returns the number of sweeps used.
    """
    p = corr.shape[0]
    grad = corr.copy()
    for j in range(p):
        if beta[j] != 0.0:
            for k in range(p):
                grad[k] -= gram[k, j] * beta[j]
    for sweep in range(max_sweeps):
        max_delta = 0.0
        for j in range(p):
            gjj = gram[j, j]
            if gjj <= 0.0:
                continue
            z = grad[j] + gjj * beta[j]
            if z > lam:
                new = (z - lam) / gjj
            elif z < -lam:
                new = (z + lam) / gjj
            else:
                new = 0.0
            delta = new - beta[j]
            if delta != 0.0:
                beta[j] = new
                for k in range(p):
                    grad[k] -= gram[k, j] * delta
                if abs(delta) > max_delta:
                    max_delta = abs(delta)
        if max_delta < tol:
            return sweep + 1
    return max_sweeps


@njit(cache=True)
def grow_tree(bins, grad, hess, n_bins, max_depth, min_leaf):
    """Grow one depth-wise regression tree on pre-binned features.

    Nodes use heap indexing (children of ``k`` are ``2k+1`` and ``2k+2``).
    A sample goes left when its bin is ``<= split_bin``. Leaf values are
    Newton steps ``-sum(grad) / sum(hess)``.
    """
    n, p = bins.shape
    max_nodes = 2 ** (max_depth + 1) - 1
    feature = np.full(max_nodes, -1, np.int64)
    split_bin = np.zeros(max_nodes, np.int64)
    value = np.zeros(max_nodes)
    node_of = np.zeros(n, np.int64)
    active = np.zeros(max_nodes, np.bool_)
    active[0] = True
    n_bin_max = 1
    for j in range(p):
        if n_bins[j] > n_bin_max:
            n_bin_max = n_bins[j]

    for depth in range(max_depth):
        first = 2 ** depth - 1
        count = 2 ** depth
        any_active = False
        for loc in range(count):
            if active[first + loc]:
                any_active = True
        if not any_active or p == 0:
            break
        hg = np.zeros((count, p, n_bin_max))
        hh = np.zeros((count, p, n_bin_max))
        hc = np.zeros((count, p, n_bin_max), np.int64)
        for i in range(n):
            k = node_of[i]
            if k < first or not active[k]:
                continue
            loc = k - first
            gi = grad[i]
            hi = hess[i]
            for j in range(p):
                b = bins[i, j]
                hg[loc, j, b] += gi
                hh[loc, j, b] += hi
                hc[loc, j, b] += 1
        for loc in range(count):
            k = first + loc
            if not active[k]:
                continue
            g_tot = 0.0
            h_tot = 0.0
            c_tot = 0
            for b in range(n_bins[0]):
                g_tot += hg[loc, 0, b]
                h_tot += hh[loc, 0, b]
                c_tot += hc[loc, 0, b]
            best_gain = 1e-12
            best_j = -1
            best_b = 0
            if c_tot >= 2 * min_leaf and h_tot > 0.0:
                parent = g_tot * g_tot / h_tot
                for j in range(p):
                    gl = 0.0
                    hl = 0.0
                    cl = 0
                    for b in range(n_bins[j] - 1):
                        gl += hg[loc, j, b]
                        hl += hh[loc, j, b]
                        cl += hc[loc, j, b]
                        cr = c_tot - cl
                        if cl < min_leaf:
                            continue
                        if cr < min_leaf:
                            break
                        hr = h_tot - hl
                        if hl <= 0.0 or hr <= 0.0:
                            continue
                        gr = g_tot - gl
                        gain = gl * gl / hl + gr * gr / hr - parent
                        if gain > best_gain:
                            best_gain = gain
                            best_j = j
                            best_b = b
            active[k] = False
            if best_j >= 0:
                feature[k] = best_j
                split_bin[k] = best_b
                active[2 * k + 1] = True
                active[2 * k + 2] = True
        for i in range(n):
            k = node_of[i]
            if feature[k] >= 0 and k >= first:
                if bins[i, feature[k]] <= split_bin[k]:
                    node_of[i] = 2 * k + 1
                else:
                    node_of[i] = 2 * k + 2

    g_sum = np.zeros(max_nodes)
    h_sum = np.zeros(max_nodes)
    for i in range(n):
        g_sum[node_of[i]] += grad[i]
        h_sum[node_of[i]] += hess[i]
    for k in range(max_nodes):
        if h_sum[k] > 0.0:
            value[k] = -g_sum[k] / h_sum[k]
    return feature, split_bin, value, node_of


@njit(cache=True)
def predict_trees(X, features, thresholds, values):
    """Sum of tree outputs for each row; trees stacked along axis 0."""
    n = X.shape[0]
    n_trees = features.shape[0]
    out = np.zeros(n)
    for t in range(n_trees):
        for i in range(n):
            k = 0
            while features[t, k] >= 0:
                if X[i, features[t, k]] <= thresholds[t, k]:
                    k = 2 * k + 1
                else:
                    k = 2 * k + 2
            out[i] += values[t, k]
    return out


@njit(cache=True)
def binomial_deviance(F, y):
    """Mean of log(1 + exp(F)) - y * F."""
    n = F.shape[0]
    total = 0.0
    for i in range(n):
        f = F[i]
        if f > 0:
            total += f + np.log1p(np.exp(-f)) - y[i] * f
        else:
            total += np.log1p(np.exp(f)) - y[i] * f
    return total / n
