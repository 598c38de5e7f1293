"""Sample selection strategies, looked up by name."""
import numpy as np

from .active import (
    score_emcm,
    score_pr,
    score_qbc,
    score_udi,
    score_umse,
    select_emcm_boot,
    select_emcm_model,
    select_pr,
    select_qbc_boot,
    select_qbc_model,
    select_ucl,
    select_udi,
    select_umse,
)
from .base import (
    BudgetError,
    CommitteeConfig,
    DegenerateStrategyError,
    ParetoSpec,
    SelectionRequest,
    StrategyConfig,
    StrategyUnavailableError,
    top_b,
)
from .init_methods import (
    non_dominated,
    pareto_dominates,
    select_clustering,
    select_distance,
    select_pareto,
    select_random,
)

STRATEGIES = {
    "random": select_random,
    "pareto": select_pareto,
    "di": select_distance,
    "cl": select_clustering,
    "pr": select_pr,
    "udi": select_udi,
    "ucl": select_ucl,
    "umse": select_umse,
    "qbc_boot": select_qbc_boot,
    "qbc_model": select_qbc_model,
    "emcm_boot": select_emcm_boot,
    "emcm_model": select_emcm_model,
}


def select(name, req, cfg=None):
    """Run strategy ``name``; returns ``req.budget`` distinct pool indices."""
    try:
        fn = STRATEGIES[name]
    except KeyError:
        raise ValueError(f"unknown strategy {name!r}; expected one of {sorted(STRATEGIES)}") from None
    picks = np.asarray(fn(req, cfg or StrategyConfig()), dtype=np.int64)
    assert len(picks) == req.budget and len(np.unique(picks)) == len(picks)
    return picks



