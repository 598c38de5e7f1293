import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from alschedule.data import (
    Attribute,
    ConfigError,
    ConflictError,
    LabeledSet,
    Oracle,
    RowError,
    Sample,
    SchemaError,
    SensorEvent,
    SensorSchema,
    SynthConfig,
    UnimputableFeatureError,
    assemble_samples,
    impute,
    ingest_sensor_csv,
    pools_from_samples,
    split_holdout,
    synth_feature_names,
    synth_pool_stream,
)

MILK = SensorSchema("milk", (Attribute("fat"), Attribute("casein", "numeric", (1.5, 3.0))))
COW = SensorSchema("cow", (Attribute("sick", "binary"),
                           Attribute("gyn", "categorical", ("open", "pregnant", "inseminated"))))


def write(tmp_path, text, name="s.csv"):
    p = tmp_path / name
    p.write_text(text)
    return p


def ev(eid, c, t, **values):
    missing = frozenset(k for k, v in values.items() if v is None)
    return SensorEvent(eid, c, t, values, missing)


def test_ingest_valid_rows(tmp_path):
    p = write(tmp_path, "event_id,case_id,timestamp,fat,casein\n"
                        "e1,c1,1,3.1,2.0\ne2,c2,1,3.4,2.2\ne3,c1,2,3.0,1.9\n")
    events = list(ingest_sensor_csv(p, MILK))
    assert [e.event_id for e in events] == ["e1", "e2", "e3"]
    assert all(not e.missing for e in events)
    assert events[1].values == {"fat": 3.4, "casein": 2.2}


def test_ingest_missing_and_invalid_cells(tmp_path):
    p = write(tmp_path, "event_id,case_id,timestamp,fat,casein\n"
                        "e1,c1,1,3.1,\ne2,c1,2,NA,9.9\ne3,c1,3,abc,2.0\n")
    events = list(ingest_sensor_csv(p, MILK))
    assert events[0].missing == {"casein"}
    assert events[1].missing == {"fat", "casein"}   # 9.9 lies outside the domain
    assert events[2].missing == {"fat"}


def test_ingest_missing_column(tmp_path):
    p = write(tmp_path, "event_id,timestamp,fat,casein\ne1,1,3.1,2.0\n")
    with pytest.raises(SchemaError, match="case_id"):
        list(ingest_sensor_csv(p, MILK))


@pytest.mark.parametrize("ts", ["x", "1.5", "-2"])
def test_ingest_bad_timestamp_reports_line(tmp_path, ts):
    p = write(tmp_path, f"event_id,case_id,timestamp,fat,casein\ne1,c1,1,3,2\ne2,c1,{ts},3,2\n")
    with pytest.raises(RowError) as exc:
        list(ingest_sensor_csv(p, MILK))
    assert exc.value.line == 3


def test_ingest_duplicate_event_id(tmp_path):
    p = write(tmp_path, "event_id,case_id,timestamp,fat,casein\ne1,c1,1,3,2\ne1,c2,1,3,2\n")
    with pytest.raises(RowError, match="duplicate"):
        list(ingest_sensor_csv(p, MILK))


def test_schema_validation(tmp_path):
    with pytest.raises(SchemaError):
        SensorSchema("s", (Attribute("a"), Attribute("a")))
    with pytest.raises(SchemaError):
        Attribute("x", "numeric", (2.0, 1.0))
    with pytest.raises(SchemaError):
        Attribute("x", "categorical")
    with pytest.raises(SchemaError):
        Attribute("x", "text")
    p = write(tmp_path, 'sensor = "cow"\n[[attributes]]\nname = "sick"\nkind = "binary"\n'
                        '[[attributes]]\nname = "gyn"\nkind = "categorical"\n'
                        'domain = ["open", "pregnant", "inseminated"]\n', "cow.toml")
    assert SensorSchema.load(p) == COW


def test_feature_names_one_hot_lexicographic():
    assert COW.feature_names == ["cow.sick", "cow.gyn=inseminated", "cow.gyn=open", "cow.gyn=pregnant"]


def test_assemble_join():
    s = assemble_samples({"milk": [ev("m1", "c", 4, fat=3.0, casein=2.0)],
                          "cow": [ev("k1", "c", 4, sick=1.0, gyn="pregnant")]}, [MILK, COW])
    assert len(s) == 1
    np.testing.assert_array_equal(s[0].features, [3.0, 2.0, 1.0, 0.0, 0.0, 1.0])
    assert s[0].feature_names == tuple(MILK.feature_names + COW.feature_names)


def test_assemble_partial_join():
    s = assemble_samples({"milk": [ev("m1", "c", 4, fat=3.0, casein=2.0)]}, [MILK, COW])
    assert s[0].features[:2].tolist() == [3.0, 2.0]
    assert np.isnan(s[0].features[2:]).all()


def test_assemble_conflict_names_both_events():
    with pytest.raises(ConflictError, match="m1.*m2"):
        assemble_samples({"milk": [ev("m1", "c", 4, fat=3.0, casein=2.0),
                                   ev("m2", "c", 4, fat=3.1, casein=2.1)]}, [MILK])


def test_assemble_order_chronological():
    s = assemble_samples({"milk": [ev("a", "c2", 5, fat=1.0, casein=2.0),
                                   ev("b", "c1", 5, fat=1.0, casein=2.0),
                                   ev("c", "c9", 1, fat=1.0, casein=2.0)]}, [MILK])
    assert [x.key for x in s] == [("c9", 1), ("c1", 5), ("c2", 5)]


def _sample(c, t, fat, casein=2.0):
    return Sample(c, t, np.array([fat, casein]), ("milk.fat", "milk.casein"))


def test_impute_forward_fill():
    out = impute([_sample("c", 3, 3.1), _sample("c", 5, math.nan)])
    assert out[1].features[0] == 3.1


def test_impute_global_mean_fallback():
    # the fixture's observed fat values: 3.0, 3.2, 4.0 -> mean 3.4
    s = [_sample("a", 1, 3.0), _sample("b", 1, 3.2), _sample("c", 1, math.nan), _sample("c", 2, 4.0)]
    out = impute(s)
    assert out[2].features[0] == pytest.approx(3.4, abs=1e-12)
    assert out[3].features[0] == 4.0


def test_impute_unimputable():
    with pytest.raises(UnimputableFeatureError, match="milk.fat"):
        impute([_sample("a", 1, math.nan), _sample("b", 2, math.nan)])


@settings(max_examples=40)
@given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 5), st.floats(0, 10)), min_size=1, max_size=20,
                unique_by=lambda r: r[:2]))
def test_impute_idempotent_and_complete(rows):
    rng = np.random.default_rng(len(rows))
    samples = [_sample(f"c{c}", t, v if rng.random() > 0.3 else math.nan) for c, t, v in rows]
    samples[0] = _sample(samples[0].case_id, samples[0].timestamp, 1.0)
    once = impute(samples)
    assert not any(np.isnan(s.features).any() for s in once)
    twice = impute(once)
    assert all(np.array_equal(a.features, b.features) for a, b in zip(once, twice))


def test_pools_from_samples_consecutive():
    s = [_sample("a", 10, 1.0), _sample("b", 10, 2.0), _sample("a", 20, 3.0)]
    pools = pools_from_samples(s)
    assert [p.round for p in pools] == [1, 2]
    assert pools[0].keys() == [("a", 10), ("b", 10)]


def test_labeled_set_append_only():
    lab = LabeledSet(2)
    lab.add([[1.0, 2.0]], [3.0], [("a", 1)], 1)
    lab.add([[1.0, 2.0]], [4.0], [("a", 2)], 2)
    assert len(lab) == 2 and lab.rounds == [1, 2]
    with pytest.raises(ValueError, match="twice"):
        lab.add([[0.0, 0.0]], [1.0], [("a", 1)], 3)
    with pytest.raises(ValueError):
        lab.add([[0.0, 0.0]], [math.inf], [("z", 1)], 3)
    assert ("a", 2) in lab and len(lab) == 2


def test_oracle_lookup():
    o = Oracle({("a", 1): 2.5})
    assert o([("a", 1)]).tolist() == [2.5]
    with pytest.raises(KeyError):
        o([("b", 1)])


def test_synth_shape_and_rounds():
    st_ = synth_pool_stream(SynthConfig(T=7, n=40, holdout_size=20), seed=1)
    assert [p.round for p in st_.pools] == list(range(1, 8))
    assert all(p.X.shape == (40, 12) for p in st_.pools)
    assert all(p.feature_names == synth_feature_names() for p in st_.pools)
    assert len(st_.test.y) == 20
    keys = [k for p in st_.pools for k in p.keys()]
    assert all(k in st_.oracle for k in keys)
    assert not set(st_.test.keys) & set(keys)


def test_synth_domains():
    X = np.vstack([p.X for p in synth_pool_stream(SynthConfig(T=5, n=300, holdout_size=5), 0).pools])
    names = synth_feature_names()
    casein, dim = X[:, names.index("spectrometer.casein")], X[:, names.index("status.dim")]
    assert casein.min() >= 1.5 and casein.max() <= 3.0
    assert dim.min() >= 0 and dim.max() <= 305 and np.all(dim == np.floor(dim))
    gyn = X[:, -3:]
    assert np.all(gyn.sum(axis=1) == 1)


def test_synth_reproducible_and_seed_sensitive():
    cfg = SynthConfig(T=4, n=30, holdout_size=8)
    a, b, c = synth_pool_stream(cfg, 3), synth_pool_stream(cfg, 3), synth_pool_stream(cfg, 4)
    for pa, pb in zip(a.pools, b.pools):
        np.testing.assert_array_equal(pa.X, pb.X)
        assert pa.case_ids == pb.case_ids
        np.testing.assert_array_equal(a.oracle(pa.keys()), b.oracle(pb.keys()))
    assert not np.array_equal(a.pools[0].X, c.pools[0].X)


def test_synth_pools_drift():
    st_ = synth_pool_stream(SynthConfig(T=30, n=500, holdout_size=30), 2)
    means = np.array([p.X[:, :8].mean(axis=0) for p in st_.pools])
    sds = st_.pools[0].X[:, :8].std(axis=0)
    spread = means.std(axis=0) / sds
    # the per-round mean moves by more than sampling noise alone (1/sqrt(500) ~ 0.045)
    assert spread.max() > 0.1


def test_synth_label_moments():
    st_ = synth_pool_stream(SynthConfig(), seed=0)
    y = np.concatenate([st_.oracle(p.keys()) for p in st_.pools])
    assert len(y) == 50_000
    assert abs(y.mean() / 10.55 - 1) <= 0.05
    assert abs(y.std() / 7.89 - 1) <= 0.05


@pytest.mark.parametrize("field,value", [("T", 0), ("n", -1), ("d", 0), ("d", 5), ("noise", 1.0)])
def test_synth_config_errors(field, value):
    with pytest.raises(ConfigError):
        SynthConfig(**{field: value}).validate()


def test_split_holdout():
    s = [_sample(f"c{i}", 1, float(i)) for i in range(50)]
    keep, held = split_holdout(s, 0.2, seed=1)
    assert len(held) == 10 and len(keep) == 40
    assert not {x.key for x in keep} & {x.key for x in held}
    again = split_holdout(s, 0.2, seed=1)[1]
    assert [x.key for x in again] == [x.key for x in held]
