"""Sensor events, samples, pools and the synthetic pool stream."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Mapping, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

MANDATORY_COLUMNS = ("event_id", "case_id", "timestamp")
MISSING_TOKENS = ("", "NA")
KINDS = ("numeric", "binary", "categorical")
_TRUE = {"1", "true", "yes"}
_FALSE = {"0", "false", "no"}


class SchemaError(ValueError):
    pass


class RowError(ValueError):
    def __init__(self, line, message):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ConflictError(ValueError):
    pass


class UnimputableFeatureError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Attribute:
    name: str
    kind: str = "numeric"
    domain: tuple | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(f"attribute {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "numeric" and self.domain is not None:
            lo, hi = self.domain
            if not lo <= hi:
                raise SchemaError(f"attribute {self.name!r}: empty domain [{lo}, {hi}]")
        if self.kind == "categorical":
            if not self.domain:
                raise SchemaError(f"categorical attribute {self.name!r} needs a value set")
            object.__setattr__(self, "domain", tuple(sorted(str(v) for v in self.domain)))

    @property
    def encoded_names(self):
        if self.kind == "categorical":
            return [f"{self.name}={v}" for v in self.domain]
        return [self.name]

    def parse(self, raw):
        """Parse a CSV cell; returns None for missing or invalid values."""
        raw = raw.strip()
        if raw in MISSING_TOKENS:
            return None
        if self.kind == "numeric":
            try:
                v = float(raw)
            except ValueError:
                return None
            if not math.isfinite(v):
                return None
            if self.domain is not None and not self.domain[0] <= v <= self.domain[1]:
                return None
            return v
        if self.kind == "binary":
            low = raw.lower()
            return 1.0 if low in _TRUE else 0.0 if low in _FALSE else None
        return raw if raw in self.domain else None


@dataclass(frozen=True)
class SensorSchema:
    sensor_name: str
    attributes: tuple

    def __post_init__(self):
        names = [a.name for a in self.attributes]
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise SchemaError(f"sensor {self.sensor_name!r}: duplicate attributes {sorted(dupes)}")
        if set(names) & set(MANDATORY_COLUMNS):
            raise SchemaError(f"sensor {self.sensor_name!r}: attribute names clash with {MANDATORY_COLUMNS}")

    @property
    def feature_names(self):
        return [f"{self.sensor_name}.{n}" for a in self.attributes for n in a.encoded_names]

    @classmethod
    def from_dict(cls, d):
        attrs = []
        for a in d["attributes"]:
            dom = a.get("domain")
            attrs.append(Attribute(a["name"], a.get("kind", "numeric"), tuple(dom) if dom is not None else None))
        return cls(d["sensor"], tuple(attrs))

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_dict(tomllib.load(fh))


@dataclass(frozen=True)
class SensorEvent:
    event_id: str
    case_id: str
    timestamp: int
    values: Mapping[str, object]
    missing: frozenset = frozenset()


@dataclass(frozen=True)
class Sample:
    case_id: str
    timestamp: int
    features: np.ndarray
    feature_names: tuple

    @property
    def key(self):
        return (self.case_id, self.timestamp)


@dataclass
class Pool:
    """Samples available for labeling in one round, held as a feature matrix."""

    round: int
    X: np.ndarray
    case_ids: tuple
    timestamps: np.ndarray
    feature_names: tuple

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.timestamps = np.asarray(self.timestamps, dtype=np.int64)
        if len(self.X) == 0:
            raise ValueError(f"pool for round {self.round} is empty")
        if self.X.shape[1] != len(self.feature_names):
            raise ValueError("feature_names length does not match pool dimension")

    def __len__(self):
        return len(self.X)

    def keys(self, idx=None):
        idx = range(len(self)) if idx is None else idx
        return [(self.case_ids[i], int(self.timestamps[i])) for i in idx]

    @property
    def samples(self):
        return [Sample(c, int(t), self.X[i], self.feature_names)
                for i, (c, t) in enumerate(zip(self.case_ids, self.timestamps))]

    @classmethod
    def from_samples(cls, round_, samples):
        return cls(round_, np.vstack([s.features for s in samples]),
                   tuple(s.case_id for s in samples), [s.timestamp for s in samples],
                   tuple(samples[0].feature_names))


@dataclass
class LabeledSet:
    """Append-only accumulation of labeled samples across rounds."""

    dim: int
    X: np.ndarray = None
    y: np.ndarray = None
    keys: list = field(default_factory=list)
    rounds: list = field(default_factory=list)

    def __post_init__(self):
        if self.X is None:
            self.X = np.empty((0, self.dim))
            self.y = np.empty(0)
        self._seen = set(self.keys)

    def __len__(self):
        return len(self.y)

    def add(self, X, y, keys, round_):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float)
        keys = [tuple(k) for k in keys]
        clash = self._seen.intersection(keys)
        if clash or len(set(keys)) != len(keys):
            raise ValueError(f"samples labeled twice: {sorted(clash) or keys}")
        if not np.all(np.isfinite(y)):
            raise ValueError("labels must be finite")
        self.X = np.vstack([self.X, X])
        self.y = np.concatenate([self.y, y])
        self.keys.extend(keys)
        self.rounds.extend([round_] * len(keys))
        self._seen.update(keys)

    def __contains__(self, key):
        return tuple(key) in self._seen


class Oracle:
    """Labels looked up by (case_id, timestamp)."""

    def __init__(self, labels: Mapping):
        self._labels = {tuple(k): float(v) for k, v in labels.items()}

    def __call__(self, keys):
        try:
            return np.array([self._labels[tuple(k)] for k in keys])
        except KeyError as exc:
            raise KeyError(f"oracle has no label for sample {exc.args[0]}") from None

    def __contains__(self, key):
        return tuple(key) in self._labels

    def __len__(self):
        return len(self._labels)


@dataclass
class TestSet:
    """Held-out samples; never offered to a selection strategy."""

    __test__ = False  # keep pytest from collecting it
    X: np.ndarray
    y: np.ndarray
    keys: list


# ingestion -------------------------------------------------------------------

def ingest_sensor_csv(path, schema: SensorSchema) -> Iterator[SensorEvent]:
    """Yield one event per row. Invalid cells are flagged missing, never dropped."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = list(MANDATORY_COLUMNS) + [a.name for a in schema.attributes]
        for col in needed:
            if col not in header:
                raise SchemaError(f"{path}: missing column {col!r}")
        seen = set()
        for row in reader:
            line = reader.line_num
            try:
                ts = int(row["timestamp"].strip())
            except (ValueError, AttributeError):
                raise RowError(line, f"unparseable timestamp {row['timestamp']!r}") from None
            if ts < 0:
                raise RowError(line, f"negative timestamp {ts}")
            eid = row["event_id"].strip()
            if eid in seen:
                raise RowError(line, f"duplicate event_id {eid!r}")
            seen.add(eid)
            values = {a.name: a.parse(row[a.name] or "") for a in schema.attributes}
            missing = frozenset(k for k, v in values.items() if v is None)
            yield SensorEvent(eid, row["case_id"].strip(), ts, values, missing)


def _encode(schema, event):
    out = []
    for a in schema.attributes:
        v = None if event is None else event.values.get(a.name)
        if a.kind == "categorical":
            out.extend([math.nan] * len(a.domain) if v is None else [float(v == c) for c in a.domain])
        else:
            out.append(math.nan if v is None else float(v))
    return out


def assemble_samples(events: Mapping[str, Sequence[SensorEvent]], schemas: Sequence[SensorSchema]):
    """Join per-sensor events on (case_id, timestamp) into samples.

    Sensors with no event for a key contribute NaN slots. Output is sorted by
    (timestamp, case_id), so each case appears in chronological order.
    """
    names = [s.sensor_name for s in schemas]
    if len(set(names)) != len(names):
        raise SchemaError(f"duplicate sensor names in {names}")
    index = {}
    for schema in schemas:
        by_key = {}
        for e in events.get(schema.sensor_name, ()):
            k = (e.case_id, e.timestamp)
            if k in by_key:
                raise ConflictError(f"sensor {schema.sensor_name!r}: events {by_key[k].event_id!r} and "
                                    f"{e.event_id!r} share case {k[0]!r} at time {k[1]}")
            by_key[k] = e
        index[schema.sensor_name] = by_key
    keys = sorted({k for by_key in index.values() for k in by_key}, key=lambda k: (k[1], k[0]))
    feature_names = tuple(n for s in schemas for n in s.feature_names)
    samples = []
    for c, t in keys:
        feats = []
        for schema in schemas:
            feats.extend(_encode(schema, index[schema.sensor_name].get((c, t))))
        samples.append(Sample(c, t, np.array(feats), feature_names))
    return samples


def impute(samples: Sequence[Sample]):
    """Forward-fill per case in time order, then fall back to the feature mean."""
    if not samples:
        return []
    F = np.vstack([s.features for s in samples]).astype(float)
    missing = np.isnan(F)
    if not missing.any():
        return list(samples)
    names = samples[0].feature_names
    observed = ~missing
    empty = np.where(~observed.any(axis=0))[0]
    if len(empty):
        raise UnimputableFeatureError(f"features missing in every sample: {[names[j] for j in empty]}")
    means = np.nanmean(F, axis=0)
    out = F.copy()
    by_case = {}
    for i, s in enumerate(samples):
        by_case.setdefault(s.case_id, []).append(i)
    for rows in by_case.values():
        rows = sorted(rows, key=lambda i: samples[i].timestamp)
        last = np.full(F.shape[1], np.nan)
        for i in rows:
            have = observed[i]
            last[have] = F[i, have]
            gap = missing[i]
            out[i, gap] = last[gap]
    still = np.isnan(out)
    out[still] = np.take(means, np.where(still)[1])
    return [Sample(s.case_id, s.timestamp, out[i], s.feature_names) for i, s in enumerate(samples)]


def pools_from_samples(samples: Sequence[Sample]):
    """Group samples into consecutive rounds, one per distinct timestamp."""
    by_ts = {}
    for s in samples:
        by_ts.setdefault(s.timestamp, []).append(s)
    return [Pool.from_samples(r, by_ts[ts]) for r, ts in enumerate(sorted(by_ts), start=1)]


# synthetic stream ------------------------------------------------------------

SPECTROMETER = SensorSchema("spectrometer", (
    Attribute("fat", "numeric", (2.0, 6.5)),
    Attribute("protein", "numeric", (2.5, 4.2)),
    Attribute("lactose", "numeric", (4.0, 5.5)),
    Attribute("igg", "numeric", (0.0, 2.0)),
    Attribute("casein", "numeric", (1.5, 3.0)),
    Attribute("oa", "numeric", (10.0, 32.0)),
    Attribute("sufa", "numeric", (50.0, 80.0)),
    Attribute("mufa", "numeric", (18.0, 40.0)),
))
STATUS = SensorSchema("status", (
    Attribute("dim", "numeric", (0, 305)),
    Attribute("gyn", "categorical", ("open", "inseminated", "pregnant")),
))
SYNTH_SCHEMAS = (SPECTROMETER, STATUS)

# Features whose increase raises the default label function.
SYNTH_POSITIVE = ("spectrometer.fat", "spectrometer.protein", "spectrometer.casein")


@dataclass
class SynthConfig:
    T: int = 100
    n: int = 500
    d: int | None = None          # fixed by the sensor schemas; checked if given
    noise: float = 0.35           # noise sd as a fraction of the label sd
    drift: float = 0.25           # per-round mean shift sd, in feature sds
    drift_fraction: float = 0.3   # share of numeric features shifted each round
    holdout_size: int = 1000
    herd_size: int = 2000
    label_mean: float = 10.55
    label_sd: float = 7.89

    def validate(self):
        for name in ("T", "n", "holdout_size"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.d is not None and self.d != len(synth_feature_names()):
            if self.d <= 0:
                raise ConfigError(f"d must be positive, got {self.d}")
            raise ConfigError(f"d={self.d} does not match the synthetic sensors ({len(synth_feature_names())})")
        if not 0 <= self.noise < 1:
            raise ConfigError("noise must lie in [0, 1)")
        if self.herd_size < self.n:
            raise ConfigError("herd_size must be at least n")


def synth_feature_names():
    return tuple(n for s in SYNTH_SCHEMAS for n in s.feature_names)


# (mean, sd) of the numeric spectrometer attributes before clipping
_NUMERIC = {
    "fat": (3.7, 0.55), "protein": (3.3, 0.25), "lactose": (4.8, 0.18), "igg": (0.6, 0.25),
    "oa": (20.0, 3.0), "sufa": (66.0, 4.0), "mufa": (27.0, 3.0),
}
_GYN_P = (0.25, 0.35, 0.40)  # inseminated, open, pregnant


def _draw_features(rng, m, shift):
    cols = {}
    for name, (mu, sd) in _NUMERIC.items():
        cols[name] = rng.normal(mu + shift.get(name, 0.0) * sd, sd, m)
    # casein: right-skewed inside [1.5, 3]
    cols["casein"] = 1.5 + 1.5 * rng.beta(2.0, 5.0, m)
    if "casein" in shift:
        cols["casein"] = cols["casein"] + shift["casein"] * 0.25
    cols["dim"] = np.floor(rng.uniform(0, 306, m))
    gyn = rng.choice(3, size=m, p=_GYN_P)
    X = np.column_stack([
        cols[a.name] for a in SPECTROMETER.attributes
    ] + [cols["dim"]] + [(gyn == k).astype(float) for k in range(3)])
    lo = np.array([a.domain[0] for a in SPECTROMETER.attributes] + [0, 0, 0, 0], dtype=float)
    hi = np.array([a.domain[1] for a in SPECTROMETER.attributes] + [305, 1, 1, 1], dtype=float)
    return np.clip(X, lo, hi)


def raw_label_function(X):
    """Uncalibrated label signal on the synthetic feature layout.

    A mild linear trend everywhere, plus a casein-gated regime where the
    response bends in protein and picks up a fat x lactation interaction.
    """
    fat, protein, casein, dim = X[:, 0], X[:, 1], X[:, 4], X[:, 8]
    p = (protein - 3.3) / 0.25
    f = (fat - 3.7) / 0.55
    c = (casein - 2.0) / 0.3
    dm = (dim - 150.0) / 90.0
    gate = 1.0 / (1.0 + np.exp(-4.0 * (c - 0.3)))
    return 0.5 * p + 0.3 * f + gate * (4.0 + 2.5 * p * np.abs(p) + 2.0 * f * dm)


def _round_shift(rng, cfg):
    names = list(_NUMERIC) + ["casein"]
    k = int(round(cfg.drift_fraction * len(names)))
    chosen = rng.choice(len(names), size=k, replace=False) if k else []
    return {names[i]: float(rng.normal(0.0, cfg.drift)) for i in chosen}


def _calibration(cfg):
    """Affine map taking the raw signal to the configured label moments."""
    rng = np.random.default_rng(20_240_601)
    chunks = [raw_label_function(_draw_features(rng, 2000, _round_shift(rng, cfg))) for _ in range(100)]
    g = np.concatenate(chunks)
    signal_sd = cfg.label_sd * math.sqrt(1.0 - cfg.noise ** 2)
    scale = signal_sd / g.std()
    return cfg.label_mean - scale * g.mean(), scale


@dataclass
class SyntheticStream:
    pools: list
    oracle: Oracle
    test: TestSet
    label_fn: object
    noise_sd: float
    feature_names: tuple


def synth_pool_stream(cfg: SynthConfig, seed: int) -> SyntheticStream:
    """T pools of n samples with a hidden noisy labeling function and a holdout."""
    cfg.validate()
    offset, scale = _calibration(cfg)

    def label_fn(X):
        return offset + scale * raw_label_function(np.atleast_2d(X))

    noise_sd = cfg.label_sd * cfg.noise
    names = synth_feature_names()
    rng = np.random.default_rng(seed)
    per_round = [cfg.holdout_size // cfg.T + (t < cfg.holdout_size % cfg.T) for t in range(cfg.T)]
    pools, labels = [], {}
    hold_X, hold_y, hold_keys = [], [], []
    for t in range(1, cfg.T + 1):
        shift = _round_shift(rng, cfg)
        h = per_round[t - 1]
        X = _draw_features(rng, cfg.n + h, shift)
        y = label_fn(X) + rng.normal(0.0, noise_sd, cfg.n + h)
        cows = rng.choice(cfg.herd_size, size=cfg.n, replace=False)
        case_ids = tuple(f"cow{c:05d}" for c in cows)
        pools.append(Pool(t, X[:cfg.n], case_ids, np.full(cfg.n, t), names))
        labels.update(zip(((c, t) for c in case_ids), y[:cfg.n]))
        hold_X.append(X[cfg.n:])
        hold_y.append(y[cfg.n:])
        hold_keys.extend((f"holdout{t:03d}-{j}", t) for j in range(h))
    test = TestSet(np.vstack(hold_X), np.concatenate(hold_y), hold_keys)
    return SyntheticStream(pools, Oracle(labels), test, label_fn, noise_sd, names)


def split_holdout(samples: Sequence[Sample], fraction: float, seed: int):
    """Seeded split of samples into (poolable, holdout)."""
    if not 0 < fraction < 1:
        raise ConfigError("holdout fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    n_hold = max(1, int(round(fraction * len(samples))))
    hold = set(rng.choice(len(samples), size=n_hold, replace=False).tolist())
    keep = [s for i, s in enumerate(samples) if i not in hold]
    held = [s for i, s in enumerate(samples) if i in hold]
    return keep, held
