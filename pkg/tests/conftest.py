import sys

import numpy as np
import pytest

from alschedule.data import LabeledSet, Pool


def make_pool(X, round_=1):
    X = np.asarray(X, dtype=float)
    names = tuple(f"f{j}" for j in range(X.shape[1]))
    return Pool(round_, X, tuple(f"c{i}" for i in range(len(X))), np.full(len(X), round_), names)


def make_labeled(X, y, round_=0):
    X = np.asarray(X, dtype=float)
    lab = LabeledSet(X.shape[1] if X.ndim == 2 else 0)
    if len(X):
        lab.add(X, y, [(f"l{i}", round_) for i in range(len(X))], round_)
    return lab


class FixedModel:
    """A fitted stand-in returning preset predictions by row index or a function."""

    fitted = True
    kind = "ols"

    def __init__(self, fn):
        self.fn = fn

    def predict(self, X):
        return np.asarray(self.fn(np.atleast_2d(X)), dtype=float)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(results):
        ok, detail = results[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}")
