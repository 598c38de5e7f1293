"""Selection request type, strategy errors and shared helpers."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..clustering import zscore
from ..data import LabeledSet, Pool


class BudgetError(ValueError):
    pass


class StrategyUnavailableError(RuntimeError):
    """The strategy cannot run on this request; callers fall back to random."""


class DegenerateStrategyError(StrategyUnavailableError):
    pass


@dataclass
class ParetoSpec:
    positive: tuple
    negative: tuple

    def __post_init__(self):
        self.positive = tuple(sorted(int(i) for i in self.positive))
        self.negative = tuple(sorted(int(i) for i in self.negative))
        if set(self.positive) & set(self.negative):
            raise ValueError("pareto feature sets overlap")

    def check(self, d):
        if set(self.positive) | set(self.negative) != set(range(d)):
            raise ValueError(f"pareto feature sets must partition all {d} features")

    @classmethod
    def from_names(cls, feature_names, positive, negative=None):
        index = {n: i for i, n in enumerate(feature_names)}
        unknown = [n for n in list(positive) + list(negative or []) if n not in index]
        if unknown:
            raise ValueError(f"unknown pareto features {unknown}")
        pos = [index[n] for n in positive]
        if negative is None:
            neg = [i for i in range(len(feature_names)) if i not in pos]
        else:
            neg = [index[n] for n in negative]
        spec = cls(pos, neg)
        spec.check(len(feature_names))
        return spec


@dataclass
class CommitteeConfig:
    size: int = 10
    base_kind: str | None = None   # None: the main model's kind
    params: dict = field(default_factory=dict)


@dataclass
class StrategyConfig:
    """Tunables for every strategy; each strategy reads the fields it needs."""

    pareto: ParetoSpec | None = None
    cl_clusters: int = 20
    udi_bins: int = 5
    udi_binning: str = "equal_frequency"
    ucl_clusters: int = 20
    ucl_top: int = 5
    committee: CommitteeConfig = field(default_factory=CommitteeConfig)
    emcm_rate: float = 0.01
    pr_sequential: bool = True

    def __post_init__(self):
        if self.udi_bins < 2:
            raise ValueError("udi_bins must be at least 2")
        if self.udi_binning not in ("equal_width", "equal_frequency"):
            raise ValueError(f"unknown binning {self.udi_binning!r}")
        if not 1 <= self.ucl_top <= self.ucl_clusters:
            raise ValueError("ucl_top must lie in [1, ucl_clusters]")
        if self.emcm_rate <= 0:
            raise ValueError("emcm_rate must be positive")


@dataclass
class SelectionRequest:
    pool: Pool
    labeled: LabeledSet
    budget: int
    model: object = None
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.budget <= len(self.pool):
            raise BudgetError(f"budget {self.budget} outside [1, {len(self.pool)}] for round {self.pool.round}")

    @property
    def rng(self):
        return np.random.default_rng(self.seed)


def top_b(scores, b):
    """Indices of the b largest scores; ties go to the lowest index."""
    scores = np.asarray(scores, dtype=float)
    return np.lexsort((np.arange(len(scores)), -scores))[:b]


def scaled_pool_and_labeled(req):
    """Pool and labeled features z-scored with their joint statistics."""
    P, L = req.pool.X, req.labeled.X
    both = np.vstack([P, L])
    return zscore(P, both), zscore(L, both)
