"""Model-aware selection: Pr, UDi, UCl, UMSE, QBC and EMCM."""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.spatial.distance import cdist

from .. import _trees
from ..clustering import kmeans, silhouette_all, zscore
from ..regressors import build_committee, committee_stats
from .base import (
    DegenerateStrategyError,
    StrategyUnavailableError,
    scaled_pool_and_labeled,
    top_b,
)
from .init_methods import select_random


def _require_model(req, name):
    if req.model is None or not getattr(req.model, "fitted", False):
        raise StrategyUnavailableError(f"{name} needs a fitted model")


def _require_labels(req, name, at_least=1):
    if len(req.labeled) < at_least:
        raise StrategyUnavailableError(
            f"{name} needs at least {at_least} labeled samples, have {len(req.labeled)}")


# Pr --------------------------------------------------------------------------

def score_pr(req):
    _require_model(req, "pr")
    _require_labels(req, "pr")
    pred = req.model.predict(req.pool.X)
    return np.abs(pred[:, None] - req.labeled.y[None, :]).min(axis=1)


def select_pr(req, cfg):
    if not cfg.pr_sequential:
        return top_b(score_pr(req), req.budget)
    _require_model(req, "pr")
    _require_labels(req, "pr")
    pred = req.model.predict(req.pool.X)
    score = np.abs(pred[:, None] - req.labeled.y[None, :]).min(axis=1)
    picks = []
    for _ in range(req.budget):
        s = score.copy()
        s[picks] = -np.inf
        k = int(np.argmax(s))
        picks.append(k)
        # the pick's predicted value joins the reference labels
        score = np.minimum(score, np.abs(pred - pred[k]))
    return np.array(picks)


# UDi -------------------------------------------------------------------------

def discretize(y, bins, binning):
    """Class index per label; bin edges come from the labels themselves."""
    y = np.asarray(y, dtype=float)
    if binning == "equal_width":
        edges = np.linspace(y.min(), y.max(), bins + 1)
    else:
        edges = np.quantile(y, np.linspace(0, 1, bins + 1))
    return np.clip(np.searchsorted(edges[1:-1], y, side="right"), 0, bins - 1)


def entropy(p):
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


def class_distribution(req, cfg):
    """Averaged leaf class proportions of a forest trained on binned labels."""
    _require_labels(req, "udi", 2)
    classes = discretize(req.labeled.y, cfg.udi_bins, cfg.udi_binning)
    if len(np.unique(classes)) < 2:
        raise DegenerateStrategyError("all labels fall into one bin")
    onehot = np.eye(cfg.udi_bins)[classes]
    X = req.labeled.X
    forest = _trees.grow_forest(X, onehot, 100, 10, 1, math.ceil(X.shape[1] / 3), req.rng)
    return forest.predict(req.pool.X)


def score_udi(req, cfg):
    return entropy(class_distribution(req, cfg))


def select_udi(req, cfg):
    return top_b(score_udi(req, cfg), req.budget)


# UCl -------------------------------------------------------------------------

def select_ucl(req, cfg):
    _require_model(req, "ucl")
    K, k = cfg.ucl_clusters, cfg.ucl_top
    if len(req.pool) < K:
        warnings.warn(f"pool of {len(req.pool)} < {K} clusters; using random selection",
                      RuntimeWarning, stacklevel=2)
        return select_random(req)
    clus = kmeans(req.pool.X, K, seed=req.seed)
    pred = req.model.predict(req.pool.X)
    var = np.array([pred[clus.assignment == c].var() for c in range(K)])
    ranked = top_b(var, K)
    sil = silhouette_all(clus)
    chosen = []
    for start in range(0, K, k):
        group = ranked[start:start + k]
        members = np.flatnonzero(np.isin(clus.assignment, group))
        members = members[np.lexsort((members, sil[members]))]
        chosen.extend(members[:req.budget - len(chosen)].tolist())
        if len(chosen) == req.budget:
            break
    return np.array(chosen)


# UMSE ------------------------------------------------------------------------

def score_umse(req):
    _require_model(req, "umse")
    _require_labels(req, "umse")
    P, L = scaled_pool_and_labeled(req)
    sq_err = (req.labeled.y - req.model.predict(req.labeled.X)) ** 2
    D = cdist(P, L)
    zero = D == 0
    with np.errstate(divide="ignore"):
        W = np.where(zero, 0.0, 1.0 / D)
    out = (W @ sq_err) / W.sum(axis=1)
    hit = zero.any(axis=1)
    if hit.any():
        # coincident labeled points: the limit of the weighted mean
        out[hit] = (zero[hit] @ sq_err) / zero[hit].sum(axis=1)
    return out


def select_umse(req, cfg):
    return top_b(score_umse(req), req.budget)


# committees ------------------------------------------------------------------

def _committee(req, cfg, mode):
    _require_labels(req, "committee strategies", 2)
    com = cfg.committee
    base = com.base_kind or (req.model.kind if req.model is not None else "random_forest")
    return build_committee(mode, req.labeled.X, req.labeled.y, req.seed,
                           base_kind=base, size=com.size, params=com.params)


def score_qbc(req, cfg, mode="bootstrap"):
    return committee_stats(_committee(req, cfg, mode), req.pool.X)[1]


def emcm_scores(x_aug, main_pred, member_preds, rate):
    """Mean squared norm of the SGD parameter step ``2 rate x (f(x) - f_c(x))``."""
    diff = main_pred[None, :] - member_preds
    return 4.0 * rate ** 2 * (x_aug ** 2).sum(axis=1) * (diff ** 2).mean(axis=0)


def score_emcm(req, cfg, mode="bootstrap"):
    _require_model(req, "emcm")
    preds = _committee(req, cfg, mode).predictions(req.pool.X)
    main = req.model.predict(req.pool.X)
    Z = zscore(req.pool.X, req.labeled.X)
    x_aug = np.hstack([Z, np.ones((len(Z), 1))])
    return emcm_scores(x_aug, main, preds, cfg.emcm_rate)


def select_qbc_boot(req, cfg):
    return top_b(score_qbc(req, cfg, "bootstrap"), req.budget)


def select_qbc_model(req, cfg):
    return top_b(score_qbc(req, cfg, "model"), req.budget)


def select_emcm_boot(req, cfg):
    return top_b(score_emcm(req, cfg, "bootstrap"), req.budget)


def select_emcm_model(req, cfg):
    return top_b(score_emcm(req, cfg, "model"), req.budget)
