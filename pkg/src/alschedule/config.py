"""Harness configuration: a TOML file with a data source and experiment tables.

A minimal file::

    seeds = [0, 1, 2, 3, 4, 5, 6, 7, 8, 9]

    [[experiment]]
    select = "random"

    [[experiment]]
    select = "qbc_boot"

Everything else defaults to the flagship setup (synthetic stream, T=100,
n=500, b=8, Di-15 initialisation, random forest learner).
"""
from __future__ import annotations

import csv
import dataclasses
import glob
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tomli_w

from .data import (
    SYNTH_POSITIVE,
    ConfigError,
    Oracle,
    SensorSchema,
    SynthConfig,
    SyntheticStream,
    TestSet,
    assemble_samples,
    impute,
    ingest_sensor_csv,
    pools_from_samples,
    split_holdout,
    synth_feature_names,
    synth_pool_stream,
)
from .regressors import DEFAULTS as REGRESSOR_DEFAULTS
from .scheduler import ExperimentConfig
from .strategies import STRATEGIES, CommitteeConfig, ParetoSpec, StrategyConfig

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger(__name__)


class ConfigFieldError(ConfigError):
    """Invalid configuration; ``problems`` lists (field path, message) pairs."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(f"{f}: {m}" for f, m in self.problems))


@dataclass
class CsvSource:
    schemas: list                     # schema TOML files, in feature order
    sensors: dict                     # sensor name -> list of CSV paths or globs
    labels: str                       # CSV with case_id, timestamp and the label column
    label_column: str = "label"
    holdout_fraction: float = 0.2
    holdout_seed: int = 0


@dataclass
class StrategySettings:
    """Strategy tunables as they appear in the file (feature names, not indices)."""

    pareto_positive: list | None = None
    pareto_negative: list | None = None
    cl_clusters: int = 20
    udi_bins: int = 5
    udi_binning: str = "equal_frequency"
    ucl_clusters: int = 20
    ucl_top: int = 5
    committee_size: int = 10
    committee_kind: str = ""          # empty: same kind as the main model
    emcm_rate: float = 0.01
    pr_sequential: bool = True


@dataclass
class ExperimentSpec:
    name: str = ""
    budget: int = 8
    K: int = 15
    init: str = "di"
    select: str = "qbc_boot"
    regressor: str = "random_forest"
    regressor_params: dict = field(default_factory=dict)
    eps: float = 0.01
    checkpoints: list = field(default_factory=lambda: [20, 50, 100])
    random_baseline_repeats: int = 15
    fit_every_round: bool = True
    strategy: StrategySettings = field(default_factory=StrategySettings)

    def __post_init__(self):
        if not self.name:
            self.name = f"{self.init}{self.K}_{self.select}" if self.K else f"none_{self.select}"


@dataclass
class HarnessConfig:
    experiments: list
    source: str = "synthetic"
    synthetic: SynthConfig = field(default_factory=SynthConfig)
    csv: CsvSource | None = None
    seeds: list = field(default_factory=lambda: [0])
    parallel: int = 1
    out: str = "results"
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # -- (de)serialisation -------------------------------------------------

    @classmethod
    def load(cls, path):
        path = Path(path)
        try:
            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigFieldError([("config", f"file not found: {path}")]) from None
        except tomllib.TOMLDecodeError as exc:
            raise ConfigFieldError([("config", f"not valid TOML: {exc}")]) from None
        cfg = cls.from_dict(raw)
        cfg.base_dir = path.parent
        return cfg

    @classmethod
    def loads(cls, text):
        try:
            return cls.from_dict(tomllib.loads(text))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigFieldError([("config", f"not valid TOML: {exc}")]) from None

    @classmethod
    def from_dict(cls, raw):
        problems = []
        raw = dict(raw)
        data = dict(raw.pop("data", {}))
        source = data.pop("source", "synthetic")
        synth = _build(SynthConfig, data.pop("synthetic", {}), "data.synthetic", problems)
        csv_raw = data.pop("csv", None)
        csv_src = _build(CsvSource, csv_raw, "data.csv", problems) if csv_raw is not None else None
        for k in data:
            problems.append((f"data.{k}", "unknown key"))
        exps = []
        for i, e in enumerate(raw.pop("experiment", [])):
            e = dict(e)
            strat = _build(StrategySettings, e.pop("strategy", {}), f"experiment[{i}].strategy", problems)
            spec = _build(ExperimentSpec, e, f"experiment[{i}]", problems)
            if spec is not None and strat is not None:
                spec.strategy = strat
                exps.append(spec)
        top = {k: raw.pop(k) for k in ("seeds", "parallel", "out") if k in raw}
        for k in raw:
            problems.append((k, "unknown key"))
        if problems:
            raise ConfigFieldError(problems)
        cfg = cls(experiments=exps, source=source, synthetic=synth or SynthConfig(), csv=csv_src, **top)
        cfg.validate()
        return cfg

    def to_dict(self):
        data = {"source": self.source, "synthetic": _drop_none(dataclasses.asdict(self.synthetic))}
        if self.csv is not None:
            data["csv"] = dataclasses.asdict(self.csv)
        exps = []
        for e in self.experiments:
            d = dataclasses.asdict(e)
            d["strategy"] = _drop_none(d["strategy"])
            exps.append(d)
        return {"seeds": list(self.seeds), "parallel": self.parallel, "out": self.out,
                "data": data, "experiment": exps}

    def dumps(self):
        return tomli_w.dumps(self.to_dict())

    # -- validation ------------------------------------------------------------

    @property
    def T(self):
        return self.synthetic.T if self.source == "synthetic" else None

    def validate(self, pool_sizes=None, feature_names=None):
        """Field-level checks; ``pool_sizes`` and ``feature_names`` come from a loaded stream."""
        p = []
        if self.source not in ("synthetic", "csv"):
            p.append(("data.source", f"must be 'synthetic' or 'csv', got {self.source!r}"))
        if self.source == "csv" and self.csv is None:
            p.append(("data.csv", "required when data.source = 'csv'"))
        if self.source == "synthetic":
            try:
                self.synthetic.validate()
            except ConfigError as exc:
                p.append(("data.synthetic", str(exc)))
            pool_sizes = pool_sizes or [self.synthetic.n]
            feature_names = feature_names or synth_feature_names()
        if self.csv is not None and not 0 < self.csv.holdout_fraction < 1:
            p.append(("data.csv.holdout_fraction", "must lie in (0, 1)"))
        if not self.experiments:
            p.append(("experiment", "at least one [[experiment]] table is required"))
        if not self.seeds or not all(isinstance(s, int) and s >= 0 for s in self.seeds):
            p.append(("seeds", "must be a non-empty list of non-negative integers"))
        elif len(set(self.seeds)) != len(self.seeds):
            p.append(("seeds", "must not repeat"))
        if not isinstance(self.parallel, int) or self.parallel < 1:
            p.append(("parallel", "must be a positive integer"))
        names = [e.name for e in self.experiments]
        for i, e in enumerate(self.experiments):
            where = f"experiment[{i}]"
            if names.count(e.name) > 1:
                p.append((f"{where}.name", f"duplicate name {e.name!r}"))
            for key in ("init", "select"):
                if getattr(e, key) not in STRATEGIES:
                    p.append((f"{where}.{key}", f"unknown strategy {getattr(e, key)!r}; "
                                                f"expected one of {sorted(STRATEGIES)}"))
            if e.regressor not in REGRESSOR_DEFAULTS:
                p.append((f"{where}.regressor", f"unknown regressor {e.regressor!r}"))
            else:
                bad = set(e.regressor_params) - set(REGRESSOR_DEFAULTS[e.regressor])
                if bad:
                    p.append((f"{where}.regressor_params", f"unknown parameters {sorted(bad)}"))
            if e.budget < 1:
                p.append((f"{where}.budget", f"must be at least 1, got {e.budget}"))
            elif pool_sizes and e.budget > min(pool_sizes):
                p.append((f"{where}.budget", f"budget {e.budget} exceeds the smallest pool "
                                             f"({min(pool_sizes)} samples)"))
            T = self.T if self.T is not None else (len(pool_sizes) if pool_sizes else None)
            if e.K < 0 or (T is not None and e.K > T):
                p.append((f"{where}.K", f"must lie in [0, T={T}], got {e.K}"))
            if e.eps <= 0:
                p.append((f"{where}.eps", "must be positive"))
            if e.random_baseline_repeats < 1:
                p.append((f"{where}.random_baseline_repeats", "must be at least 1"))
            uses_pareto = "pareto" in (e.init, e.select)
            if uses_pareto and self.source == "csv" and e.strategy.pareto_positive is None:
                p.append((f"{where}.strategy.pareto_positive", "required for pareto on CSV data"))
            if feature_names is not None and (e.strategy.pareto_positive is not None or uses_pareto):
                try:
                    self._pareto(e, feature_names)
                except ValueError as exc:
                    p.append((f"{where}.strategy.pareto_positive", str(exc)))
            try:
                self._strategy_config(e, feature_names)
            except ValueError as exc:
                p.append((f"{where}.strategy", str(exc)))
        if p:
            raise ConfigFieldError(p)

    # -- conversion ------------------------------------------------------------

    def _pareto(self, e, feature_names):
        s = e.strategy
        positive = s.pareto_positive
        if positive is None:
            positive = SYNTH_POSITIVE
        return ParetoSpec.from_names(feature_names, positive, s.pareto_negative)

    def _strategy_config(self, e, feature_names=None):
        s = e.strategy
        pareto = None
        if feature_names is not None and ("pareto" in (e.init, e.select) or s.pareto_positive is not None):
            pareto = self._pareto(e, feature_names)
        return StrategyConfig(
            pareto=pareto, cl_clusters=s.cl_clusters, udi_bins=s.udi_bins, udi_binning=s.udi_binning,
            ucl_clusters=s.ucl_clusters, ucl_top=s.ucl_top,
            committee=CommitteeConfig(s.committee_size, s.committee_kind or None),
            emcm_rate=s.emcm_rate, pr_sequential=s.pr_sequential)

    def experiment_configs(self, T, feature_names):
        return [ExperimentConfig(
            name=e.name, T=T, budget=e.budget, K=e.K, init_strategy=e.init, select_strategy=e.select,
            regressor=e.regressor, regressor_params=dict(e.regressor_params),
            strategy=self._strategy_config(e, feature_names), eps=e.eps,
            checkpoints=tuple(e.checkpoints), random_baseline_repeats=e.random_baseline_repeats,
            fit_every_round=e.fit_every_round) for e in self.experiments]

    def stream_factory(self):
        if self.source == "synthetic":
            return SynthFactory(self.synthetic)
        return CsvFactory(self.csv, str(self.base_dir))


def _drop_none(d):
    return {k: v for k, v in d.items() if v is not None}


def _build(cls, raw, where, problems):
    """Instantiate a dataclass from a table, collecting unknown keys and type errors."""
    if not isinstance(raw, dict):
        problems.append((where, "must be a table"))
        return None
    fields = {f.name: f for f in dataclasses.fields(cls) if f.init}
    unknown = [k for k in raw if k not in fields or k == "base_dir"]
    for k in unknown:
        problems.append((f"{where}.{k}", "unknown key"))
    kwargs = {}
    for k, v in raw.items():
        if k in unknown:
            continue
        default = _default_of(fields[k])
        if not _type_ok(v, default):
            problems.append((f"{where}.{k}", f"expected {type(default).__name__}, got {v!r}"))
            continue
        kwargs[k] = float(v) if isinstance(default, float) and not isinstance(v, bool) else v
    try:
        return cls(**kwargs)
    except TypeError as exc:
        problems.append((where, str(exc)))
        return None


def _default_of(f):
    if f.default is not dataclasses.MISSING:
        return f.default
    if f.default_factory is not dataclasses.MISSING:
        return f.default_factory()
    return None


def _type_ok(value, default):
    if default is None:
        return True
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, int):
        return isinstance(value, int) and not isinstance(value, bool)
    if isinstance(default, float):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, type(default))


# stream factories: picklable, so runs can be farmed out to worker processes


@dataclass
class SynthFactory:
    cfg: SynthConfig

    def __call__(self, seed):
        return synth_pool_stream(self.cfg, seed)


@dataclass
class CsvFactory:
    """Loads the CSV stream once per process; the stream does not depend on the seed."""

    src: CsvSource
    base_dir: str = "."
    _cache: object = field(default=None, repr=False, compare=False)

    def __call__(self, seed):
        if self._cache is None:
            self._cache = load_csv_stream(self.src, Path(self.base_dir))
        return self._cache

    def __getstate__(self):
        return {"src": self.src, "base_dir": self.base_dir, "_cache": None}


def _expand(base, pattern):
    hits = sorted(glob.glob(str(base / pattern)))
    if not hits:
        raise ConfigFieldError([("data.csv", f"no files match {pattern!r}")])
    return hits


def load_csv_stream(src: CsvSource, base: Path):
    """Ingest sensor CSVs, join, impute, attach labels and carve the holdout."""
    schemas = [SensorSchema.load(p) for s in src.schemas for p in _expand(base, s)]
    events = {}
    for schema in schemas:
        patterns = src.sensors.get(schema.sensor_name)
        if not patterns:
            raise ConfigFieldError([(f"data.csv.sensors.{schema.sensor_name}", "no files given")])
        patterns = [patterns] if isinstance(patterns, str) else patterns
        evs, seen = [], set()
        for pat in patterns:
            for path in _expand(base, pat):
                for e in ingest_sensor_csv(path, schema):
                    if e.event_id in seen:
                        raise ConfigFieldError([(f"data.csv.sensors.{schema.sensor_name}",
                                                 f"event_id {e.event_id!r} repeats across files")])
                    seen.add(e.event_id)
                    evs.append(e)
        events[schema.sensor_name] = evs
    samples = impute(assemble_samples(events, schemas))

    labels = {}
    with open(base / src.labels, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for col in ("case_id", "timestamp", src.label_column):
            if col not in (reader.fieldnames or []):
                raise ConfigFieldError([("data.csv.label_column" if col == src.label_column else "data.csv.labels",
                                         f"label file lacks column {col!r}")])
        for row in reader:
            try:
                labels[(row["case_id"].strip(), int(row["timestamp"]))] = float(row[src.label_column])
            except ValueError:
                continue
    unlabeled = [s for s in samples if s.key not in labels]
    if unlabeled:
        log.warning("dropping %d samples without a label", len(unlabeled))
    samples = [s for s in samples if s.key in labels]
    if not samples:
        raise ConfigFieldError([("data.csv.labels", "no sample has a label")])
    keep, held = split_holdout(samples, src.holdout_fraction, src.holdout_seed)
    pools = pools_from_samples(keep)
    test = TestSet(np.vstack([s.features for s in held]), np.array([labels[s.key] for s in held]),
                   [s.key for s in held])
    oracle = Oracle({s.key: labels[s.key] for s in keep})
    return SyntheticStream(pools, oracle, test, None, None, tuple(samples[0].feature_names))
