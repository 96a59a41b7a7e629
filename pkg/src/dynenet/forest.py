"""Regression forest (CART, squared error) with impurity and permutation importance."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

LEAF = -1


@dataclass(frozen=True)
class ForestParams:
    n_trees: int = 200
    max_depth: int | None = None
    min_leaf: int = 5
    max_features: int | None = None  # None: ceil(p / 3)
    bootstrap: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        if self.min_leaf < 1:
            raise ValueError("min_leaf must be >= 1")
        if self.max_depth is not None and self.max_depth < 0:
            raise ValueError("max_depth must be >= 0")
        if self.max_features is not None and self.max_features < 1:
            raise ValueError("max_features must be >= 1")

    def features_per_split(self, p):
        m = math.ceil(p / 3) if self.max_features is None else self.max_features
        return max(1, min(p, m))


@dataclass
class Tree:
    feature: np.ndarray  # LEAF for leaves
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    gain: np.ndarray  # SSE decrease of the split at each internal node

    @property
    def n_nodes(self):
        return self.feature.size

    @property
    def n_leaves(self):
        return int((self.feature == LEAF).sum())

    def predict(self, X):
        return _predict_tree(np.ascontiguousarray(X, dtype=float), self.feature, self.threshold, self.left,
                             self.right, self.value)


@njit(cache=True)
def _best_split(X, y, idx, candidates, min_leaf):
    m = idx.shape[0]
    total = 0.0
    for i in range(m):
        total += y[idx[i]]
    parent = total * total / m
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    best_pos = -1
    best_order = np.empty(0, dtype=np.int64)
    xs = np.empty(m)
    ys = np.empty(m)
    for f in candidates:
        for i in range(m):
            xs[i] = X[idx[i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(m):
            ys[i] = y[idx[order[i]]]
        left = 0.0
        for i in range(1, m):
            left += ys[i - 1]
            if i < min_leaf or m - i < min_leaf:
                continue
            lo = xs[order[i - 1]]
            hi = xs[order[i]]
            if not lo < hi:
                continue
            right = total - left
            # SSE(parent) - SSE(children) = sum-of-squares terms of the means
            gain = left * left / i + right * right / (m - i) - parent
            if gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = 0.5 * (lo + hi)
                best_pos = i
                best_order = order.copy()
    return best_f, best_thr, best_gain, best_pos, best_order


@njit(cache=True)
def _build_tree(X, y, rows, max_features, min_leaf, max_depth, seed):
    np.random.seed(seed)
    n_samples = rows.shape[0]
    p = X.shape[1]
    cap = 2 * n_samples + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    gain = np.zeros(cap)
    # explicit stack of (node id, start, stop, depth) over a permuted row buffer
    buf = rows.copy()
    stack = np.empty((cap, 4), dtype=np.int64)
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n_samples
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    all_features = np.arange(p)
    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        stop = stack[top, 2]
        depth = stack[top, 3]
        idx = buf[start:stop]
        m = stop - start
        s = 0.0
        for i in range(m):
            s += y[idx[i]]
        value[node] = s / m
        if m < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth):
            continue
        if max_features < p:
            candidates = np.sort(np.random.permutation(all_features)[:max_features])
        else:
            candidates = all_features
        f, thr, g, pos, order = _best_split(X, y, idx, candidates, min_leaf)
        # strict decrease only; tiny gains are floating-point noise
        if f < 0 or g <= 1e-12 * (1.0 + abs(s * s / m)):
            continue
        sorted_idx = idx[order]
        for i in range(m):
            buf[start + i] = sorted_idx[i]
        feature[node] = f
        threshold[node] = thr
        gain[node] = g
        l_id = n_nodes
        r_id = n_nodes + 1
        n_nodes += 2
        left[node] = l_id
        right[node] = r_id
        stack[top, 0] = r_id
        stack[top, 1] = start + pos
        stack[top, 2] = stop
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = l_id
        stack[top, 1] = start
        stack[top, 2] = start + pos
        stack[top, 3] = depth + 1
        top += 1
    return (feature[:n_nodes], threshold[:n_nodes], left[:n_nodes], right[:n_nodes], value[:n_nodes],
            gain[:n_nodes])


@njit(cache=True)
def _predict_tree(X, feature, threshold, left, right, value):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def fit_tree(X, y, rows=None, max_features=None, min_leaf=5, max_depth=None, seed=0):
    X = np.ascontiguousarray(X, dtype=float)
    y = np.ascontiguousarray(y, dtype=float)
    rows = np.arange(X.shape[0]) if rows is None else np.asarray(rows, dtype=np.int64)
    mf = X.shape[1] if max_features is None else int(max_features)
    depth = -1 if max_depth is None else int(max_depth)
    parts = _build_tree(X, y, rows, mf, int(min_leaf), depth, int(seed) % (2 ** 32))
    return Tree(*parts)


@dataclass
class Forest:
    trees: list
    params: ForestParams
    n_features: int
    feature_names: tuple = ()
    tree_seeds: list = field(default_factory=list)

    def tree_predictions(self, X):
        X = np.ascontiguousarray(X, dtype=float)
        return np.stack([t.predict(X) for t in self.trees])

    def predict(self, X):
        return self.tree_predictions(X).mean(axis=0)


def fit_random_forest(X, y, params=None, feature_names=None):
    """Bootstrap forest of CART regression trees with per-split feature subsampling."""
    params = params or ForestParams()
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[1] < 1:
        raise ValueError("X must be a matrix with at least one column")
    n, p = X.shape
    if y.shape != (n,):
        raise ValueError("y must have one value per row of X")
    if n < 2 * params.min_leaf:
        raise ValueError(f"need at least {2 * params.min_leaf} rows, got {n}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("X and y must be finite")
    seeds = np.random.SeedSequence(params.seed).generate_state(params.n_trees)
    mf = params.features_per_split(p)
    trees = []
    for s in seeds:
        if params.bootstrap:
            rows = np.random.default_rng(int(s)).integers(0, n, size=n)
        else:
            rows = np.arange(n)
        trees.append(fit_tree(X, y, rows, mf, params.min_leaf, params.max_depth, int(s)))
    names = tuple(feature_names) if feature_names is not None else tuple(f"x{j}" for j in range(p))
    return Forest(trees=trees, params=params, n_features=p, feature_names=names, tree_seeds=[int(s) for s in seeds])


def _max_normalise(scores):
    top = scores.max() if scores.size else 0.0
    return scores / top if top > 0 else np.zeros_like(scores)


def raw_impurity_importance(forest):
    """Total SSE decrease per feature, summed over all splits of all trees."""
    out = np.zeros(forest.n_features)
    for t in forest.trees:
        internal = t.feature >= 0
        np.add.at(out, t.feature[internal], t.gain[internal])
    return out


def impurity_importance(forest):
    """Impurity decrease per feature scaled so the largest is 1 (all zero without splits)."""
    return _max_normalise(raw_impurity_importance(forest))


def permutation_importance(forest, X, y, n_repeats=5, seed=0):
    """Increase in training MSE when a column is shuffled, clipped at 0, max-normalised."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    rng = np.random.default_rng(seed)
    base = np.mean((forest.predict(X) - y) ** 2)
    out = np.zeros(X.shape[1])
    for j in range(X.shape[1]):
        acc = 0.0
        for _ in range(n_repeats):
            Xp = X.copy()
            Xp[:, j] = X[rng.permutation(X.shape[0]), j]
            acc += np.mean((forest.predict(Xp) - y) ** 2) - base
        out[j] = max(acc / n_repeats, 0.0)
    return _max_normalise(out)
