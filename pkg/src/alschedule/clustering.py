"""K-means, silhouette coefficients and medoids on z-scored features."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

MAX_ITER = 300


class UndefinedMeasureError(ValueError):
    pass


def zscore(X, ref=None):
    ref = X if ref is None else ref
    mu = ref.mean(axis=0)
    sd = ref.std(axis=0)
    sd[sd == 0] = 1.0
    return (X - mu) / sd


def _sq_dists(A, B):
    return cdist(A, B, "sqeuclidean")


@dataclass
class Clustering:
    K: int
    centroids: np.ndarray    # original feature units
    assignment: np.ndarray   # sample index -> cluster index
    Z: np.ndarray            # z-scored samples the clustering was computed on
    z_centroids: np.ndarray
    n_iter: int = 0

    def members(self, c):
        return np.flatnonzero(self.assignment == c)

    def wcss(self):
        return float(((self.Z - self.z_centroids[self.assignment]) ** 2).sum())


def _plus_plus(Z, K, rng):
    n = len(Z)
    chosen = [int(rng.integers(n))]
    d2 = ((Z - Z[chosen[0]]) ** 2).sum(axis=1)
    for _ in range(1, K):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            free = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(free))
        chosen.append(nxt)
        d2 = np.minimum(d2, ((Z - Z[nxt]) ** 2).sum(axis=1))
    return Z[chosen].copy()


def _repair_empty(Z, centroids, assign, K):
    # Move the point farthest from its own centroid into each empty cluster.
    for c in range(K):
        if np.any(assign == c):
            continue
        counts = np.bincount(assign, minlength=K)
        dist = ((Z - centroids[assign]) ** 2).sum(axis=1)
        dist[counts[assign] <= 1] = -1.0
        i = int(np.argmax(dist))
        assign[i] = c
        centroids[c] = Z[i]
    return assign


def kmeans(X, K, seed=0):
    X = np.asarray(X, dtype=float)
    n = len(X)
    if K < 1 or n < K:
        raise ValueError(f"kmeans needs 1 <= K <= n samples, got K={K}, n={n}")
    Z = zscore(X)
    rng = np.random.default_rng(seed)
    centroids = _plus_plus(Z, K, rng)
    assign = np.argmin(_sq_dists(Z, centroids), axis=1)
    assign = _repair_empty(Z, centroids, assign, K)
    prev_wcss = np.inf
    it = 0
    for it in range(1, MAX_ITER + 1):
        centroids = np.vstack([Z[assign == c].mean(axis=0) for c in range(K)])
        wcss = float(((Z - centroids[assign]) ** 2).sum())
        assert wcss <= prev_wcss + 1e-9 * max(1.0, prev_wcss), "k-means objective increased"
        prev_wcss = wcss
        new = np.argmin(_sq_dists(Z, centroids), axis=1)
        new = _repair_empty(Z, centroids, new, K)
        if np.array_equal(new, assign):
            break
        assign = new
    centroids = np.vstack([Z[assign == c].mean(axis=0) for c in range(K)])
    raw = np.vstack([X[assign == c].mean(axis=0) for c in range(K)])
    return Clustering(K, raw, assign, Z, centroids, it)


def silhouette_all(clustering):
    """Silhouette coefficient of every sample."""
    Z, assign, K = clustering.Z, clustering.assignment, clustering.K
    if len(np.unique(assign)) < 2:
        raise UndefinedMeasureError("silhouette needs at least two clusters")
    D = cdist(Z, Z)
    n = len(Z)
    counts = np.bincount(assign, minlength=K)
    sums = np.zeros((n, K))
    for c in range(K):
        sums[:, c] = D[:, assign == c].sum(axis=1)
    own = counts[assign]
    a = np.where(own > 1, sums[np.arange(n), assign] / np.maximum(own - 1, 1), 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        other = sums / counts
    other[np.arange(n), assign] = np.inf
    other[:, counts == 0] = np.inf
    b = other.min(axis=1)
    denom = np.maximum(a, b)
    return np.where(denom > 0, (b - a) / np.where(denom > 0, denom, 1.0), 0.0)


def silhouette(clustering, index):
    return float(silhouette_all(clustering)[index])


def medoid(clustering, c):
    """Index of the member nearest its cluster centroid (lowest index on ties)."""
    members = clustering.members(c)
    d = ((clustering.Z[members] - clustering.z_centroids[c]) ** 2).sum(axis=1)
    return int(members[np.argmin(d)])
