"""Model-free selection: random, Pareto, distance (Di) and clustering (Cl)."""
from __future__ import annotations

import logging
import warnings

import numpy as np
from scipy.spatial.distance import cdist

from ..clustering import kmeans, medoid
from .base import scaled_pool_and_labeled

log = logging.getLogger(__name__)


def select_random(req, cfg=None):
    return np.sort(req.rng.choice(len(req.pool), size=req.budget, replace=False))


def pareto_dominates(x, other, spec, direction="positive"):
    """Whether ``x`` Pareto-dominates ``other`` in the given direction."""
    x = np.asarray(x, dtype=float)
    other = np.asarray(other, dtype=float)
    if x.shape != other.shape:
        raise ValueError(f"dimension mismatch: {x.shape} vs {other.shape}")
    pos, neg = list(spec.positive), list(spec.negative)
    if direction == "negative":
        pos, neg = neg, pos
    elif direction != "positive":
        raise ValueError(f"unknown direction {direction!r}")
    if np.any(x[pos] < other[pos]) or np.any(x[neg] > other[neg]):
        return False
    return bool(np.any(x[pos] > other[pos]) or np.any(x[neg] < other[neg]))


def non_dominated(X, spec):
    """Mask of samples dominated by no other sample in at least one direction.

    A sample survives if it lies on the positive front (nobody positively
    dominates it) or on the negative front (nobody negatively dominates it).
    """
    S = np.asarray(X, dtype=float).copy()
    S[:, list(spec.negative)] *= -1
    ge = (S[:, None, :] >= S[None, :, :]).all(axis=2)
    gt = (S[:, None, :] > S[None, :, :]).any(axis=2)
    dom = ge & gt  # dom[i, j]: i positively dominates j
    return ~dom.any(axis=0) | ~dom.any(axis=1)


def select_pareto(req, cfg):
    spec = cfg.pareto
    if spec is None:
        raise ValueError("pareto selection needs a ParetoSpec")
    spec.check(req.pool.X.shape[1])
    rng = req.rng
    front = np.flatnonzero(non_dominated(req.pool.X, spec))
    b = req.budget
    if len(front) >= b:
        return np.sort(rng.choice(front, size=b, replace=False))
    rest = np.setdiff1d(np.arange(len(req.pool)), front)
    fill = rng.choice(rest, size=b - len(front), replace=False)
    return np.concatenate([front, np.sort(fill)])


def greedy_max_min(P, R, b, candidates=None):
    """Sequential farthest-point picks from rows of P away from reference rows R.

    With no reference rows the first pick is the row farthest from the mean
    of P. Ties go to the lowest index.
    """
    idx = np.arange(len(P)) if candidates is None else np.asarray(candidates)
    C = P[idx]
    if len(R):
        mind = cdist(C, R).min(axis=1)
    else:
        mind = None
    picks = []
    for _ in range(b):
        if mind is None:
            score = np.linalg.norm(C - P.mean(axis=0), axis=1)
        else:
            score = mind.copy()
        score[picks] = -np.inf
        k = int(np.argmax(score))
        picks.append(k)
        dk = np.linalg.norm(C - C[k], axis=1)
        mind = dk if mind is None else np.minimum(mind, dk)
    return idx[picks]


def select_distance(req, cfg=None):
    P, L = scaled_pool_and_labeled(req)
    return greedy_max_min(P, L, req.budget)


def select_clustering(req, cfg):
    K = cfg.cl_clusters
    if len(req.pool) < K:
        warnings.warn(f"pool of {len(req.pool)} < {K} clusters; using distance sampling",
                      RuntimeWarning, stacklevel=2)
        return select_distance(req)
    clus = kmeans(req.pool.X, K, seed=req.seed)
    reps = np.array([medoid(clus, c) for c in range(K)])
    P, L = scaled_pool_and_labeled(req)
    b = req.budget
    picked = greedy_max_min(P, L, min(b, K), candidates=reps)
    if b > K:
        others = np.setdiff1d(np.arange(len(P)), picked)
        more = greedy_max_min(P, np.vstack([L, P[picked]]), b - K, candidates=others)
        picked = np.concatenate([picked, more])
    return picked
