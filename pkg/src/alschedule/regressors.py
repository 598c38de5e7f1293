"""Regression models and committees.

Every model exposes ``fit(X, y, seed)`` / ``predict(X)`` on dense float
arrays. Linear kinds and knn z-score their inputs with statistics of the
training set; tree kinds use raw features.

Training rows are put into a canonical order before fitting so that a
model depends on the training *set* and the seed, never on row order.
"""
from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from . import _trees

log = logging.getLogger(__name__)

KINDS = ("ols", "ridge", "lasso", "knn", "tree", "random_forest", "gradient_boosting")
LINEAR_KINDS = ("ols", "ridge", "lasso")
# Heterogeneous committee roster.
MODEL_ROSTER = ("ridge", "lasso", "ols", "random_forest", "gradient_boosting", "knn")

DEFAULTS = {
    "ols": {},
    "ridge": {"alpha": 1.0},
    "lasso": {"alpha": 0.1, "tol": 1e-6, "max_sweeps": 10_000},
    "knn": {"k": 5},
    "tree": {"max_depth": 10, "min_leaf": 2},
    "random_forest": {"n_trees": 100, "max_depth": 10, "min_leaf": 2},
    "gradient_boosting": {"n_trees": 100, "max_depth": 3, "min_leaf": 1, "learning_rate": 0.1},
}

OLS_FALLBACK_PENALTY = 1e-8


class NotFittedError(RuntimeError):
    pass


class InsufficientDataError(ValueError):
    pass


class DimensionError(ValueError):
    pass


def canonical_order(X, y):
    """Row permutation sorting by (features..., label) lexicographically."""
    keys = [y] + [X[:, j] for j in range(X.shape[1] - 1, -1, -1)]
    return np.lexsort(keys)


def _zscore_stats(X):
    mu = X.mean(axis=0)
    sd = X.std(axis=0)
    sd[sd == 0] = 1.0
    return mu, sd


def _lasso_cd(Z, yc, alpha, tol, max_sweeps):
    # minimises (1/2n)||yc - Z b||^2 + alpha ||b||_1 on centred data
    n, d = Z.shape
    beta = np.zeros(d)
    col_sq = (Z ** 2).sum(axis=0) / n
    resid = yc.copy()
    for _ in range(max_sweeps):
        max_step = 0.0
        for j in range(d):
            if col_sq[j] == 0:
                continue
            old = beta[j]
            rho = Z[:, j] @ resid / n + col_sq[j] * old
            new = math.copysign(max(abs(rho) - alpha, 0.0), rho) / col_sq[j]
            if new != old:
                resid -= Z[:, j] * (new - old)
                beta[j] = new
                max_step = max(max_step, abs(new - old))
        if max_step < tol:
            break
    return beta


@dataclass
class Regressor:
    kind: str = "random_forest"
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown regressor kind {self.kind!r}; expected one of {KINDS}")
        self.params = {**DEFAULTS[self.kind], **self.params}
        self.n_features = None
        self.seed = None
        self._state = None

    @property
    def fitted(self):
        return self._state is not None

    def clone(self):
        return Regressor(self.kind, dict(self.params))

    def fit(self, X, y, seed=0):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) != len(y):
            raise DimensionError(f"X has shape {X.shape}, y has length {len(y)}")
        if len(y) < 2:
            raise InsufficientDataError(f"need at least 2 labeled samples, got {len(y)}")
        order = canonical_order(X, y)
        X, y = X[order], y[order]
        self.n_features = X.shape[1]
        self.seed = seed
        getattr(self, f"_fit_{self.kind}")(X, y, seed)
        return self

    def predict(self, X):
        if not self.fitted:
            raise NotFittedError(f"{self.kind} regressor used before fit")
        X = np.asarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise DimensionError(f"expected {self.n_features} features, got {X.shape[1]}")
        return getattr(self, f"_predict_{self.kind}")(X)

    # linear kinds ------------------------------------------------------------

    def _fit_linear(self, X, y, beta_z, mu, sd):
        coef = beta_z / sd
        self._state = {"coef": coef, "intercept": float(y.mean() - mu @ coef)}

    def _fit_ols(self, X, y, seed):
        mu, sd = _zscore_stats(X)
        Z = (X - mu) / sd
        yc = y - y.mean()
        gram = Z.T @ Z
        if np.linalg.matrix_rank(gram) < gram.shape[0]:
            warnings.warn("singular normal equations; falling back to ridge "
                          f"with penalty {OLS_FALLBACK_PENALTY}", RuntimeWarning, stacklevel=3)
            gram = gram + OLS_FALLBACK_PENALTY * np.eye(gram.shape[0])
        beta = np.linalg.solve(gram, Z.T @ yc)
        self._fit_linear(X, y, beta, mu, sd)

    def _fit_ridge(self, X, y, seed):
        mu, sd = _zscore_stats(X)
        Z = (X - mu) / sd
        gram = Z.T @ Z + self.params["alpha"] * np.eye(Z.shape[1])
        beta = np.linalg.solve(gram, Z.T @ (y - y.mean()))
        self._fit_linear(X, y, beta, mu, sd)

    def _fit_lasso(self, X, y, seed):
        mu, sd = _zscore_stats(X)
        Z = (X - mu) / sd
        p = self.params
        beta = _lasso_cd(Z, y - y.mean(), p["alpha"], p["tol"], p["max_sweeps"])
        self._fit_linear(X, y, beta, mu, sd)

    def _predict_linear(self, X):
        return X @ self._state["coef"] + self._state["intercept"]

    _predict_ols = _predict_ridge = _predict_lasso = _predict_linear

    @property
    def coef_(self):
        if self.kind not in LINEAR_KINDS or not self.fitted:
            raise AttributeError("coef_ is only defined for fitted linear regressors")
        return self._state["coef"]

    @property
    def intercept_(self):
        if self.kind not in LINEAR_KINDS or not self.fitted:
            raise AttributeError("intercept_ is only defined for fitted linear regressors")
        return self._state["intercept"]

    # knn -----------------------------------------------------------------------

    def _fit_knn(self, X, y, seed):
        mu, sd = _zscore_stats(X)
        self._state = {"Z": (X - mu) / sd, "y": y, "mu": mu, "sd": sd}

    def _predict_knn(self, X):
        s = self._state
        Q = (X - s["mu"]) / s["sd"]
        k = min(self.params["k"], len(s["y"]))
        d2 = ((Q[:, None, :] - s["Z"][None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :k]
        return s["y"][nearest].mean(axis=1)

    # trees ---------------------------------------------------------------------

    def _fit_tree(self, X, y, seed):
        p = self.params
        self._state = _trees.grow_forest(X, y, 1, p["max_depth"], p["min_leaf"], X.shape[1],
                                         np.random.default_rng(seed), bootstrap=False)

    def _fit_random_forest(self, X, y, seed):
        p = self.params
        n_try = p.get("max_features") or math.ceil(X.shape[1] / 3)
        self._state = _trees.grow_forest(X, y, p["n_trees"], p["max_depth"], p["min_leaf"],
                                         n_try, np.random.default_rng(seed))

    def _fit_gradient_boosting(self, X, y, seed):
        p = self.params
        XT = np.ascontiguousarray(X.T)
        sorted_rows = _trees.presort(X)
        w = np.ones(len(y))
        base = float(y.mean())
        trees = []
        current = np.full(len(y), base)
        for _ in range(p["n_trees"]):
            resid = (y - current)[:, None]
            tree = _trees.build_tree(XT, resid, w, sorted_rows, p["max_depth"],
                                     p["min_leaf"], X.shape[1], 0)
            trees.append(tree)
            current += p["learning_rate"] * _trees.PackedTrees([tree], [1.0]).predict(X)[:, 0]
        self._state = {"base": base,
                       "trees": _trees.PackedTrees(trees, np.full(len(trees), p["learning_rate"]))}

    def _predict_tree(self, X):
        return self._state.predict(X)[:, 0]

    _predict_random_forest = _predict_tree

    def _predict_gradient_boosting(self, X):
        return self._state["base"] + self._state["trees"].predict(X)[:, 0]

    # inspection ----------------------------------------------------------------

    def dump(self):
        """JSON text describing the fitted model. Not a stable format."""
        out = {"kind": self.kind, "params": self.params, "n_features": self.n_features}
        s = self._state
        if self.kind in LINEAR_KINDS and s is not None:
            out["coef"] = s["coef"].tolist()
            out["intercept"] = s["intercept"]
        elif self.kind == "knn" and s is not None:
            out["n_train"] = len(s["y"])
        elif s is not None:
            packed = s["trees"] if self.kind == "gradient_boosting" else s
            if self.kind == "gradient_boosting":
                out["base"] = s["base"]
            out["trees"] = [
                {"root": int(r), "weight": float(wt)}
                for r, wt in zip(packed.roots, packed.weights)
            ]
            out["nodes"] = {
                "feature": packed.feature.tolist(),
                "threshold": packed.threshold.tolist(),
                "left": packed.left.tolist(),
                "right": packed.right.tolist(),
                "value": packed.value[:, 0].tolist(),
            }
        return json.dumps(out, indent=1)


@dataclass
class Committee:
    members: list
    mode: str

    def __len__(self):
        return len(self.members)

    def predictions(self, X):
        """Member predictions, shape (C, n)."""
        return np.vstack([m.predict(X) for m in self.members])


def build_committee(mode, X, y, seed, base_kind="random_forest", size=10, params=None):
    """Fit a bootstrap committee (``size`` resamples of one kind) or the model roster."""
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(y) < 2:
        raise InsufficientDataError(f"committee needs at least 2 labeled samples, got {len(y)}")
    rng = np.random.default_rng(seed)
    if mode == "model":
        members = [Regressor(kind).fit(X, y, seed=int(s))
                   for kind, s in zip(MODEL_ROSTER, rng.integers(0, 2**31 - 1, len(MODEL_ROSTER)))]
        return Committee(members, "model")
    if mode != "bootstrap":
        raise ValueError(f"unknown committee mode {mode!r}")
    if size < 2:
        raise ValueError("committee size must be at least 2")
    order = canonical_order(X, y)
    X, y = X[order], y[order]
    n = len(y)
    members = []
    for _ in range(size):
        idx = rng.integers(0, n, size=n)
        sub_seed = int(rng.integers(0, 2**31 - 1))
        members.append(Regressor(base_kind, dict(params or {})).fit(X[idx], y[idx], seed=sub_seed))
    return Committee(members, "bootstrap")


def committee_stats(committee, X):
    """Mean, population variance and raw member predictions per row of X."""
    preds = committee.predictions(X)
    mean = preds.mean(axis=0)
    # centre on the first member so a unanimous committee gives exactly 0
    dev = preds - preds[0]
    var = ((dev - dev.mean(axis=0)) ** 2).mean(axis=0)
    return mean, var, preds
