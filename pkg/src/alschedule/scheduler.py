"""Two-phase data collection schedule and multi-run comparisons."""
from __future__ import annotations

import hashlib
import itertools
import json
import logging
import math
import warnings
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import strategies
from .data import LabeledSet
from .metrics import NEVER, RunReport, derive, mse, paired_ttest_log, stars
from .regressors import Regressor
from .strategies import SelectionRequest, StrategyConfig, StrategyUnavailableError

log = logging.getLogger(__name__)


def derive_seed(seed, *parts):
    """Stable 31-bit sub-seed for (seed, *parts); strings are hashed."""
    words = [int(seed) & 0xFFFFFFFF]
    for p in parts:
        words.append(zlib.crc32(p.encode()) if isinstance(p, str) else int(p) & 0xFFFFFFFF)
    return int(np.random.SeedSequence(words).generate_state(1)[0] >> 1)


class RunFailedError(RuntimeError):
    """A single (config, seed, repeat) run raised; carries its fingerprint."""

    def __init__(self, message, fingerprint):
        super().__init__(message, fingerprint)
        self.message = message
        self.fingerprint = fingerprint

    def __str__(self):
        return f"{self.message} [{self.fingerprint}]"


@dataclass
class ExperimentConfig:
    name: str = "di15_qbc_boot"
    T: int = 100
    budget: int = 8
    K: int = 15
    init_strategy: str = "di"
    select_strategy: str = "qbc_boot"
    regressor: str = "random_forest"
    regressor_params: dict = field(default_factory=dict)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    eps: float = 0.01
    checkpoints: tuple = (20, 50, 100)
    random_baseline_repeats: int = 15
    fit_every_round: bool = True

    def validate(self):
        if not 0 <= self.K <= self.T:
            raise ValueError(f"K must lie in [0, T], got K={self.K}, T={self.T}")
        if self.budget < 1:
            raise ValueError(f"budget must be at least 1, got {self.budget}")
        if self.eps <= 0:
            raise ValueError("eps must be positive")
        for s in (self.init_strategy, self.select_strategy):
            if s not in strategies.STRATEGIES:
                raise ValueError(f"unknown strategy {s!r}")
        Regressor(self.regressor, dict(self.regressor_params))

    @property
    def is_random_baseline(self):
        return self.select_strategy == "random"

    def fingerprint(self, seed, repeat=0):
        blob = json.dumps({"cfg": _jsonable(asdict(self)), "seed": seed, "repeat": repeat},
                          sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


@dataclass
class RunResult:
    config: str
    seed: int
    repeat: int
    report: RunReport
    schedule: list        # (round, case_id, timestamp, strategy)
    labeled: LabeledSet
    model: Regressor
    fallbacks: list       # rounds where the strategy fell back to random


def run_experiment(pools, oracle, test, cfg: ExperimentConfig, seed=0, repeat=0):
    """Run the K initialisation rounds then T - K active rounds.

    The strategy only ever sees the round's pool, the labeled set and the
    current model; the holdout is touched solely for evaluation.
    """
    cfg.validate()
    if len(pools) != cfg.T:
        raise ValueError(f"stream has {len(pools)} pools, config expects T={cfg.T}")
    run_seed = derive_seed(seed, "repeat", repeat) if repeat else seed
    labeled = LabeledSet(pools[0].X.shape[1])
    model = None
    curve, rounds, schedule, fallbacks = [], [], [], []
    for t, pool in enumerate(pools, start=1):
        if pool.round != t:
            raise ValueError(f"pool rounds must run 1..T without gaps; got {pool.round} at position {t}")
        name = cfg.init_strategy if t <= cfg.K else cfg.select_strategy
        req = SelectionRequest(pool, labeled, cfg.budget, model, derive_seed(run_seed, "select", t))
        try:
            picks = strategies.select(name, req, cfg.strategy)
        except StrategyUnavailableError as exc:
            log.warning("round %d: %s unavailable (%s); selecting at random", t, name, exc)
            fallbacks.append(t)
            name = "random"
            picks = strategies.select("random", req, cfg.strategy)
        keys = pool.keys(picks)
        labeled.add(pool.X[picks], oracle(keys), keys, t)
        schedule.extend((t, c, ts, name) for c, ts in keys)
        if (cfg.fit_every_round or t >= cfg.K) and len(labeled) >= 2:
            model = Regressor(cfg.regressor, dict(cfg.regressor_params))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                model.fit(labeled.X, labeled.y, seed=derive_seed(run_seed, "fit", t))
            curve.append(mse(test.y, model.predict(test.X)))
            rounds.append(t)
        log.info("%s seed=%d rep=%d round %d/%d: %s, |X|=%d%s", cfg.name, seed, repeat, t, cfg.T,
                 name, len(labeled), f", mse={curve[-1]:.3f}" if rounds and rounds[-1] == t else "")
    report = RunReport(curve, rounds, cfg.eps, seed, cfg.fingerprint(seed, repeat), tuple(cfg.checkpoints))
    return RunResult(cfg.name, seed, repeat, report, schedule, labeled, model, fallbacks)


# comparisons ---------------------------------------------------------------

@dataclass
class ConfigSummary:
    name: str
    curves: dict          # seed -> repeat-averaged MSE curve
    rounds: list
    metrics: dict         # metric -> mean over seeds of per-seed values
    checkpoints: dict     # round -> mean MSE over seeds


@dataclass
class Comparison:
    configs: list
    summaries: dict       # config name -> ConfigSummary
    pairwise: list        # dicts: a, b, t, p, significant, stars, m
    runs: list            # every RunResult
    baseline: str | None

    def table(self):
        rows = []
        for cfg in self.configs:
            s = self.summaries[cfg.name]
            row = {"config": cfg.name, "init": cfg.init_strategy, "K": cfg.K,
                   "select": cfg.select_strategy, "n_seeds": len(s.curves)}
            row.update(s.metrics)
            for r, v in s.checkpoints.items():
                row[f"mse_{r}"] = v
            vs = self.versus(cfg.name, self.baseline) if self.baseline else None
            row["p_vs_baseline"] = vs["p"] if vs else math.nan
            row["significance"] = vs["stars"] if vs and vs["significant"] else ""
            rows.append(row)
        return rows

    def versus(self, a, b):
        for row in self.pairwise:
            if {row["a"], row["b"]} == {a, b} and a != b:
                return row
        return None


def _guarded(stream, cfg, seed, repeat):
    try:
        return run_experiment(stream.pools, stream.oracle, stream.test, cfg, seed, repeat)
    except Exception as exc:
        msg = f"{cfg.name} seed={seed} repeat={repeat}: {type(exc).__name__}: {exc}"
        raise RunFailedError(msg, cfg.fingerprint(seed, repeat)) from exc


def _job(args):
    factory, cfg, seed, repeat = args
    return _guarded(factory(seed), cfg, seed, repeat)


def _mean_metric(values):
    nums = [v for v in values if isinstance(v, (int, float)) and not (isinstance(v, float) and math.isnan(v))]
    return float(np.mean(nums)) if nums else math.nan


def run_comparison(stream_factory, cfgs, seeds, parallel=1, alpha=0.05):
    """Run every config on every seed and compare them pairwise.

    Random-selection configs are repeated ``random_baseline_repeats`` times per
    seed and their curves averaged. Pairwise paired t-tests run on the pooled
    per-round curves of all seeds with a Bonferroni factor equal to the number
    of pairs.
    """
    if len(cfgs) < 2:
        raise ValueError("a comparison needs at least two configs")
    if len({c.T for c in cfgs}) != 1:
        raise ValueError(f"configs disagree on T: {sorted({c.T for c in cfgs})}")
    names = [c.name for c in cfgs]
    if len(set(names)) != len(names):
        raise ValueError(f"duplicate config names in {names}")
    for c in cfgs:
        c.validate()
    jobs = [(stream_factory, c, s, r) for c in cfgs for s in seeds
            for r in range(c.random_baseline_repeats if c.is_random_baseline else 1)]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as ex:
            results = list(ex.map(_job, jobs))
    else:
        # seed-major order so each stream is built once
        results = [None] * len(jobs)
        current, stream = None, None
        for i in sorted(range(len(jobs)), key=lambda i: seeds.index(jobs[i][2])):
            factory, c, s, r = jobs[i]
            if s != current:
                current, stream = s, factory(s)
            results[i] = _guarded(stream, c, s, r)

    summaries = {}
    for c in cfgs:
        mine = [r for r in results if r.config == c.name]
        rounds = mine[0].report.rounds
        curves, per_seed = {}, []
        for s in seeds:
            reps = [r for r in mine if r.seed == s]
            curve = np.mean([r.report.curve for r in reps], axis=0)
            curves[s] = curve
            per_seed.append(derive(list(curve), c.eps))
        metrics = {k: _mean_metric([m[k] for m in per_seed]) for k in per_seed[0]}
        # mean FTC covers converged seeds only; count the rest
        metrics["ftc_never"] = sum(m["ftc"] == NEVER for m in per_seed)
        mean_curve = np.mean(list(curves.values()), axis=0)
        checkpoints = {r: float(mean_curve[rounds.index(r)]) if r in rounds else math.nan
                       for r in c.checkpoints}
        summaries[c.name] = ConfigSummary(c.name, curves, rounds, metrics, checkpoints)

    pairs = list(itertools.combinations(names, 2))
    pairwise = []
    for a, b in pairs:
        sa, sb = summaries[a], summaries[b]
        common = sorted(set(sa.rounds) & set(sb.rounds))
        ia = [sa.rounds.index(r) for r in common]
        ib = [sb.rounds.index(r) for r in common]
        ca = np.concatenate([sa.curves[s][ia] for s in seeds])
        cb = np.concatenate([sb.curves[s][ib] for s in seeds])
        res = paired_ttest_log(ca, cb, alpha=alpha, comparisons=len(pairs))
        pairwise.append({"a": a, "b": b, "t": res.t, "p": res.p, "m": len(pairs),
                         "significant": res.significant, "stars": stars(res.p) if res.significant else "",
                         "mean_log_diff": float(np.mean(np.log1p(ca) - np.log1p(cb)))})
    baseline = next((c.name for c in cfgs if c.is_random_baseline), None)
    return Comparison(list(cfgs), summaries, pairwise, results, baseline)
