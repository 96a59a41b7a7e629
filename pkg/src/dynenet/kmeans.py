"""k-means (k-means++ seeding, Lloyd iterations), silhouette sweep, classical MDS."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class ClusterAssignment:
    countries: tuple
    labels: np.ndarray
    centroids: np.ndarray
    inertia: float
    k: int
    inertia_history: list = field(default_factory=list)
    n_iter: int = 0

    def as_dict(self):
        return {c: int(l) for c, l in zip(self.countries, self.labels)}


def _sq_dist(X, C):
    d = (X * X).sum(1)[:, None] - 2 * X @ C.T + (C * C).sum(1)[None, :]
    return np.maximum(d, 0.0)


def _plusplus(X, k, rng):
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    d2 = _sq_dist(X, X[centers])[:, 0]
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # fewer distinct points than k: any unused row
            unused = np.setdiff1d(np.arange(n), centers)
            nxt = int(rng.choice(unused))
        centers.append(nxt)
        d2 = np.minimum(d2, _sq_dist(X, X[[nxt]])[:, 0])
    return X[centers].copy()


def _lloyd(X, C, max_iter):
    history = []
    labels = None
    for it in range(max_iter):
        d = _sq_dist(X, C)
        new = d.argmin(1)
        # an empty cluster takes the point farthest from its current centre
        for j in range(C.shape[0]):
            if not np.any(new == j):
                own = d[np.arange(len(new)), new]
                far = int(own.argmax())
                if own[far] > 0:
                    new[far] = j
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(C.shape[0]):
            members = X[labels == j]
            if len(members):
                C[j] = members.mean(0)
        history.append(float(((X - C[labels]) ** 2).sum()))
    return labels, C, history


def kmeans(matrix, k, seed=0, n_init=10, max_iter=300, countries=None):
    """Best of ``n_init`` k-means++ / Lloyd runs by inertia."""
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2:
        raise ValueError("matrix must be 2-D")
    n = X.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k must lie in [1, {n}], got {k}")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        C = _plusplus(X, k, rng)
        labels, C, history = _lloyd(X, C, max_iter)
        inertia = float(((X - C[labels]) ** 2).sum())
        if best is None or inertia < best[3]:
            best = (labels, C, history, inertia)
    labels, C, history, inertia = best
    names = tuple(countries) if countries is not None else tuple(str(i) for i in range(n))
    return ClusterAssignment(
        countries=names, labels=labels, centroids=C, inertia=inertia, k=k,
        inertia_history=history, n_iter=len(history),
    )


def adjusted_rand_index(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1))
    np.add.at(table, (ai, bi), 1)

    def comb2(x):
        return (x * (x - 1) / 2).sum()

    n = len(a)
    index = comb2(table)
    ra, rb = comb2(table.sum(1)), comb2(table.sum(0))
    expected = ra * rb / comb2(np.array([n]))
    top = (ra + rb) / 2
    if top == expected:
        return 1.0
    return float((index - expected) / (top - expected))


def silhouette(X, labels):
    X = np.asarray(X, dtype=float)
    labels = np.asarray(labels)
    D = np.sqrt(_sq_dist(X, X))
    ids = np.unique(labels)
    if len(ids) < 2:
        return 0.0
    s = np.zeros(len(X))
    for i in range(len(X)):
        own = labels == labels[i]
        if own.sum() == 1:
            continue  # singleton clusters score 0
        a = D[i, own].sum() / (own.sum() - 1)
        b = min(D[i, labels == j].mean() for j in ids if j != labels[i])
        s[i] = (b - a) / max(a, b) if max(a, b) > 0 else 0.0
    return float(s.mean())


def silhouette_sweep(matrix, ks=range(2, 11), seed=0, n_init=10):
    """Mean silhouette per k (advice only); ks at or above the row count are skipped."""
    X = np.asarray(matrix, dtype=float)
    out = {}
    for k in ks:
        if k >= X.shape[0]:
            continue
        out[k] = silhouette(X, kmeans(X, k, seed=seed, n_init=n_init).labels)
    return out


def classical_mds(matrix, dims=2):
    """Torgerson scaling of Euclidean distances between rows."""
    X = np.asarray(matrix, dtype=float)
    n = X.shape[0]
    D2 = _sq_dist(X, X)
    J = np.eye(n) - 1.0 / n
    B = -0.5 * J @ D2 @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:dims]
    vals, vecs = np.clip(vals[order], 0, None), vecs[:, order]
    # fix eigenvector signs so output is reproducible
    for j in range(vecs.shape[1]):
        if vecs[np.abs(vecs[:, j]).argmax(), j] < 0:
            vecs[:, j] *= -1
    coords = vecs * np.sqrt(vals)
    if coords.shape[1] < dims:
        coords = np.hstack([coords, np.zeros((n, dims - coords.shape[1]))])
    return coords
