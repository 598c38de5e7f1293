"""Per-round error curves and the measures derived from them."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

NEVER = "never"


def mse(y, y_hat):
    y = np.asarray(y, dtype=float)
    y_hat = np.asarray(y_hat, dtype=float)
    if y.shape != y_hat.shape or y.size == 0:
        raise ValueError(f"mse needs equal non-empty lengths, got {y.shape} and {y_hat.shape}")
    return float(np.mean((y - y_hat) ** 2))


def auc_and_logauc(curve):
    c = np.asarray(curve, dtype=float)
    if c.size == 0:
        raise ValueError("empty curve")
    return float(c.sum()), float(np.log1p(c).sum())


def _second_differences(curve):
    c = np.asarray(curve, dtype=float)
    if c.size < 3:
        raise ValueError(f"need at least 3 rounds, got {c.size}")
    return np.abs(c[2:] - 2 * c[1:-1] + c[:-2])


def asd(curve):
    """Mean absolute second difference, normalised by T - 1 as published."""
    sd = _second_differences(curve)
    T = sd.size + 2
    return float(sd.sum() / (T - 1))


def wasd(curve):
    """Round-weighted absolute second difference; later rounds weigh more."""
    sd = _second_differences(curve)
    T = sd.size + 2
    t = np.arange(2, T)  # centre round of each second difference, 1-based
    return float(2.0 / ((T - 1) * (T - 2)) * (t * sd).sum())


def ftc(curve, eps=0.01):
    """First round after which every consecutive change stays below ``eps``.

    Rounds are 1-based. Returns ``NEVER`` when the last step is already ``eps``
    or larger.
    """
    c = np.asarray(curve, dtype=float)
    if c.size < 2:
        raise ValueError("ftc needs at least 2 rounds")
    big = np.flatnonzero(np.abs(np.diff(c)) >= eps)
    if big.size == 0:
        return 1
    last = int(big[-1]) + 2  # 1-based round index i of the offending step
    return NEVER if last == c.size else last


@dataclass
class TTest:
    t: float
    p: float
    significant: bool
    threshold: float


def paired_ttest_log(curve_a, curve_b, alpha=0.05, comparisons=1):
    """Two-tailed paired t-test on log(MSE + 1), Bonferroni-corrected."""
    a = np.log1p(np.asarray(curve_a, dtype=float))
    b = np.log1p(np.asarray(curve_b, dtype=float))
    if a.shape != b.shape or a.size < 3:
        raise ValueError("paired test needs equal-length curves of at least 3 rounds")
    d = a - b
    n = d.size
    mean = d.mean()
    sd = d.std(ddof=1)
    threshold = alpha / comparisons
    if sd == 0:
        if mean == 0:
            return TTest(0.0, 1.0, False, threshold)
        return TTest(math.copysign(math.inf, mean), 0.0, True, threshold)
    t = mean / (sd / math.sqrt(n))
    p = float(2.0 * stats.t.sf(abs(t), df=n - 1))
    return TTest(float(t), p, p < threshold, threshold)


def stars(p):
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""


@dataclass
class RunReport:
    curve: list
    rounds: list
    eps: float = 0.01
    seed: int = 0
    fingerprint: str = ""
    checkpoints: tuple = (20, 50, 100)
    derived: dict = field(init=False)

    def __post_init__(self):
        self.curve = [float(v) for v in self.curve]
        if any(not math.isfinite(v) or v < 0 for v in self.curve):
            raise ValueError("curve entries must be finite and non-negative")
        self.derived = derive(self.curve, self.eps)

    def __getattr__(self, name):
        derived = self.__dict__.get("derived", {})
        if name in derived:
            return derived[name]
        raise AttributeError(name)

    def mse_at(self, round_):
        try:
            return self.curve[self.rounds.index(round_)]
        except ValueError:
            return math.nan

    def row(self):
        out = {"seed": self.seed, "fingerprint": self.fingerprint}
        out.update(self.derived)
        for c in self.checkpoints:
            out[f"mse_{c}"] = self.mse_at(c)
        out["final_mse"] = self.curve[-1]
        return out


def derive(curve, eps=0.01):
    auc, log_auc = auc_and_logauc(curve)
    out = {"auc": auc, "log_auc": log_auc}
    if len(curve) >= 3:
        out["asd"] = asd(curve)
        out["wasd"] = wasd(curve)
    else:
        out["asd"] = out["wasd"] = math.nan
    out["ftc"] = ftc(curve, eps) if len(curve) >= 2 else NEVER
    return out
