import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from alschedule.metrics import (
    NEVER,
    RunReport,
    asd,
    auc_and_logauc,
    derive,
    ftc,
    mse,
    paired_ttest_log,
    wasd,
)

curves = st.lists(st.floats(0, 1e3, allow_nan=False), min_size=3, max_size=60)


def test_mse_values():
    assert mse([1.0, 2.0], [1.0, 2.0]) == 0
    assert mse([0, 0], [1, 3]) == pytest.approx(5, abs=1e-12)
    assert mse([2], [5]) == 9


def test_mse_length_mismatch():
    with pytest.raises(ValueError):
        mse([1, 2], [1])


def test_auc_and_logauc():
    assert auc_and_logauc([0, 0, 0]) == (0, 0)
    e1 = math.e - 1
    assert auc_and_logauc([e1, e1])[1] == pytest.approx(2, abs=1e-12)
    auc, log_auc = auc_and_logauc([1, 2, 3])
    assert auc == 6
    assert log_auc == pytest.approx(math.log(2) + math.log(3) + math.log(4), abs=1e-12)


def test_asd():
    assert asd([4, 4, 4, 4]) == 0
    assert asd([1, 2, 3, 4]) == 0
    assert asd([0, 1, 0]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        asd([1, 2])


def test_wasd():
    assert wasd([2, 2, 2, 2]) == 0
    # one term: t=2, |0 - 2 + 0| = 2, normaliser 2/(2*1)
    assert wasd([0, 1, 0]) == pytest.approx(4.0, abs=1e-12)


def test_wasd_weighs_late_spikes_more():
    early = np.zeros(10)
    early[2] = 1.0
    late = np.zeros(10)
    late[7] = 1.0
    assert asd(early) == pytest.approx(asd(late))
    assert wasd(late) > wasd(early)


def test_normalisers_match_published_form():
    c = np.array([3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0])
    T = len(c)
    terms = [abs(c[t] - 2 * c[t - 1] + c[t - 2]) for t in range(2, T)]  # 0-based centre t-1
    assert asd(c) == pytest.approx(sum(terms) / (T - 1), abs=1e-12)
    weighted = sum((t) * terms[t - 2] for t in range(2, T))
    assert wasd(c) == pytest.approx(2 * weighted / ((T - 1) * (T - 2)), abs=1e-12)


def test_ftc():
    assert ftc([3, 3, 3, 3]) == 1
    assert ftc([5, 3, 3.005, 3.004, 3.004], eps=0.01) == 2
    jump = [1.0] * 8
    jump[5] = 1.5
    jump[6:] = [1.5, 1.5]
    assert ftc(jump) == 6
    assert ftc([1, 1, 1, 2]) == NEVER


def test_paired_ttest_identical():
    c = [5.0, 4.0, 3.0, 2.5]
    res = paired_ttest_log(c, c)
    assert res.p == 1 and not res.significant


def test_paired_ttest_constant_shift_is_significant():
    base = 5 + np.sin(np.arange(100))
    a = np.expm1(np.log1p(base) + 0.3)
    res = paired_ttest_log(a, base, comparisons=50)
    assert res.p == 0 and res.significant


def test_paired_ttest_closed_form():
    rng = np.random.default_rng(3)
    a = rng.uniform(1, 20, 30)
    b = a * rng.uniform(0.8, 1.1, 30)
    d = [math.log(x + 1) - math.log(y + 1) for x, y in zip(a, b)]
    mean = sum(d) / len(d)
    sd = math.sqrt(sum((v - mean) ** 2 for v in d) / (len(d) - 1))
    t = mean / (sd / math.sqrt(len(d)))
    res = paired_ttest_log(a, b, comparisons=3)
    assert res.t == pytest.approx(t, abs=1e-9)
    ref = stats.ttest_rel(np.log1p(a), np.log1p(b))
    assert res.p == pytest.approx(ref.pvalue, abs=1e-9)
    assert res.significant == (res.p < 0.05 / 3)


@given(curves)
def test_logauc_never_exceeds_auc(c):
    auc, log_auc = auc_and_logauc(c)
    assert log_auc <= auc + 1e-9


@given(curves, st.floats(-100, 100), st.floats(0.1, 10))
def test_smoothness_shift_and_scale(c, shift, scale):
    c = np.array(c)
    for fn in (asd, wasd):
        base = fn(c)
        assert fn(c + shift) == pytest.approx(base, rel=1e-6, abs=1e-6)
        assert fn(scale * c) == pytest.approx(scale * base, rel=1e-6, abs=1e-6)


@settings(max_examples=50)
@given(curves, st.floats(1e-4, 1.0), st.floats(1e-4, 1.0))
def test_ftc_monotone_in_eps(c, e1, e2):
    lo, hi = sorted((e1, e2))
    a, b = ftc(c, lo), ftc(c, hi)
    as_num = lambda v: math.inf if v == NEVER else v
    assert as_num(b) <= as_num(a)


def test_report_fields_recomputable():
    curve = [9.0, 7.5, 7.0, 6.9, 6.89]
    rep = RunReport(curve, list(range(1, 6)))
    assert rep.derived == derive(curve)
    assert rep.log_auc == pytest.approx(sum(math.log1p(v) for v in curve))
    assert math.isnan(rep.mse_at(20))
