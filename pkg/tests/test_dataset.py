import json
import warnings

import numpy as np
import pytest

from kandet.dataset import (
    DatasetFormatError,
    EmbeddingRecord,
    NormWarning,
    SplitError,
    SplitSpec,
    load_bin,
    load_jsonl,
    stratified_split,
    summarize,
    synthetic_gaussians,
    to_arrays,
    write_bin,
    write_jsonl,
)
from kandet.numerics import SeededRng

from oracles import logistic_probe_auc


def make_records(n=3, dim=8, seed=0):
    rng = SeededRng(seed)
    recs = []
    for i in range(n):
        v = rng.normal(dim)
        v /= np.linalg.norm(v)
        recs.append(EmbeddingRecord(f"rec-{i}", i % 2, "fixture", v))
    return recs


# ---------------------------------------------------------------------------
# jsonl

def test_jsonl_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_jsonl(path) == []


def test_jsonl_round_trip_value_identical(tmp_path):
    recs = make_records()
    path = tmp_path / "d.jsonl"
    write_jsonl(recs, path)
    loaded = load_jsonl(path)
    assert len(loaded) == len(recs)
    for a, b in zip(recs, loaded):
        assert (a.id, a.label, a.source) == (b.id, b.label, b.source)
        assert np.array_equal(a.embedding, b.embedding)


def test_jsonl_wrong_dim_names_id(tmp_path):
    recs = make_records()
    recs[2] = EmbeddingRecord("bad-one", 0, "fixture", recs[2].embedding[:7])
    path = tmp_path / "d.jsonl"
    write_jsonl(recs, path)
    with pytest.raises(DatasetFormatError, match="bad-one"):
        load_jsonl(path)


def test_jsonl_malformed_line_number(tmp_path):
    path = tmp_path / "d.jsonl"
    write_jsonl(make_records(2), path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    with pytest.raises(DatasetFormatError, match="line 3"):
        load_jsonl(path)


def test_jsonl_unknown_label(tmp_path):
    path = tmp_path / "d.jsonl"
    obj = {"id": "x", "label": "synthetic?", "source": "s", "embedding": [1.0]}
    path.write_text(json.dumps(obj) + "\n")
    with pytest.raises(DatasetFormatError, match="label"):
        load_jsonl(path)


def test_non_unit_norm_warns_but_loads(tmp_path):
    path = tmp_path / "d.jsonl"
    obj = {"id": "loud", "label": "real", "source": "s", "embedding": [3.0, 4.0]}
    path.write_text(json.dumps(obj) + "\n")
    with pytest.warns(NormWarning, match="loud"):
        recs = load_jsonl(path)
    assert len(recs) == 1


# ---------------------------------------------------------------------------
# binary

def test_bin_round_trip_bit_exact(tmp_path):
    recs = make_records(5)
    p1 = tmp_path / "a.kemb"
    p2 = tmp_path / "b.kemb"
    write_bin(recs, p1)
    loaded = load_bin(p1)
    write_bin(loaded, p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bin_jsonl_bin_round_trip(tmp_path):
    recs = make_records(4)
    b1 = tmp_path / "a.kemb"
    write_bin(recs, b1)
    once = load_bin(b1)  # now float32-quantized values
    j = tmp_path / "a.jsonl"
    write_jsonl(once, j)
    again = load_jsonl(j)
    b2 = tmp_path / "b.kemb"
    write_bin(again, b2)
    assert b1.read_bytes() == b2.read_bytes()


def test_bin_truncation_reports_offset(tmp_path):
    path = tmp_path / "t.kemb"
    write_bin(make_records(3), path)
    data = path.read_bytes()
    path.write_bytes(data[:-10])
    with pytest.raises(DatasetFormatError, match="offset"):
        load_bin(path)


def test_bin_bad_magic(tmp_path):
    path = tmp_path / "bad.kemb"
    path.write_bytes(b"NOPE" + b"\x00" * 20)
    with pytest.raises(DatasetFormatError, match="magic"):
        load_bin(path)


def test_bin_widens_to_float64(tmp_path):
    path = tmp_path / "w.kemb"
    write_bin(make_records(2), path)
    recs = load_bin(path)
    assert recs[0].embedding.dtype == np.float64


# ---------------------------------------------------------------------------
# summarize

def test_summarize_combined_fixture(tmp_path):
    # source counts mirroring the combined training corpus; the manifest
    # total is always the actual record count
    counts = {"raise1k": (1000, 0), "sd3-ultra": (340, 1), "dalle3": (333, 1), "midjourney6": (333, 1)}
    recs = []
    v = np.zeros(4)
    v[0] = 1.0
    for src, (n, label) in counts.items():
        recs += [EmbeddingRecord(f"{src}-{i}", label, src, v) for i in range(n)]
    path = tmp_path / "combined.kemb"
    write_bin(recs, path)
    manifest = summarize(load_bin(path))
    assert manifest.per_source == {"raise1k": 1000, "sd3-ultra": 340, "dalle3": 333, "midjourney6": 333}
    assert manifest.total == len(recs) == sum(manifest.per_source.values())


def test_summarize_ood_fixture():
    v = np.zeros(4)
    v[0] = 1.0
    recs = []
    for src, label in (("real-random", 0), ("firefly", 1), ("dalle3", 1), ("midjourney5", 1)):
        recs += [EmbeddingRecord(f"{src}-{i}", label, src, v) for i in range(500)]
    manifest = summarize(recs)
    assert set(manifest.per_source.values()) == {500}
    assert len(manifest.per_source) == 4
    assert manifest.total == 2000


def test_summarize_empty():
    manifest = summarize([])
    assert manifest.total == 0
    assert manifest.per_source == {}


# ---------------------------------------------------------------------------
# splits

def test_split_exact_proportions():
    recs = make_records(200, seed=1)  # 100 per class
    train, val, hold = stratified_split(recs, SplitSpec(0.8, 0.1, seed=3))
    def counts(rs):
        return sum(1 for r in rs if r.label == 0), sum(1 for r in rs if r.label == 1)
    assert counts(train) == (80, 80)
    assert counts(val) == (10, 10)
    assert counts(hold) == (10, 10)


def test_split_deterministic():
    recs = make_records(50, seed=2)
    a = stratified_split(recs, SplitSpec(seed=9))
    b = stratified_split(recs, SplitSpec(seed=9))
    for part_a, part_b in zip(a, b):
        assert [r.id for r in part_a] == [r.id for r in part_b]


def test_split_union_is_input_multiset():
    rng = SeededRng(11)
    for trial in range(10):
        n = int(rng.integer_below(60)) + 8
        recs = make_records(n, seed=trial + 20)
        train, val, hold = stratified_split(recs, SplitSpec(0.7, 0.2, seed=trial))
        ids = sorted(r.id for r in train + val + hold)
        assert ids == sorted(r.id for r in recs)
        assert len(set(ids)) == len(ids)


def test_split_proportions_within_one_record():
    recs = make_records(103, seed=5)
    train, val, hold = stratified_split(recs, SplitSpec(0.8, 0.1, seed=0))
    for label in (0, 1):
        n = sum(1 for r in recs if r.label == label)
        got = sum(1 for r in train if r.label == label)
        assert abs(got - 0.8 * n) <= 1.0


def test_split_unstratified_still_partitions():
    recs = make_records(30, seed=8)
    train, val, hold = stratified_split(recs, SplitSpec(0.6, 0.2, seed=1, stratify=False))
    assert sorted(r.id for r in train + val + hold) == sorted(r.id for r in recs)
    assert len(train) == 18 and len(val) == 6 and len(hold) == 6


def test_split_impossible_stratification():
    recs = make_records(8, seed=6)
    recs = [r for r in recs if r.label == 0] + [r for r in recs if r.label == 1][:1]
    with pytest.raises(SplitError):  # class 1 has a single record
        stratified_split(recs, SplitSpec())


# ---------------------------------------------------------------------------
# synthetic data

def test_synthetic_records_are_unit_norm():
    recs = synthetic_gaussians(50, dim=16, separation=3.0, seed=0)
    norms = [np.linalg.norm(r.embedding) for r in recs]
    assert max(abs(n - 1.0) for n in norms) < 1e-9
    assert all(np.abs(r.embedding).max() <= 1.0 for r in recs)
    assert sum(r.label for r in recs) == 50  # balanced


def test_synthetic_zero_separation_probe_auc_near_half():
    recs = synthetic_gaussians(500, dim=16, separation=0.0, seed=1)
    x, y = to_arrays(recs)
    auc = logistic_probe_auc(x, y.astype(float), steps=60)
    assert 0.45 < auc < 0.58  # train-set AUC of a weak probe on pure noise


def test_synthetic_wide_separation_probe_auc_high():
    recs = synthetic_gaussians(300, dim=16, separation=6.0, seed=2)
    x, y = to_arrays(recs)
    auc = logistic_probe_auc(x, y.astype(float), steps=300)
    assert auc > 0.99


def test_synthetic_deterministic():
    a = synthetic_gaussians(10, dim=8, separation=2.0, seed=7)
    b = synthetic_gaussians(10, dim=8, separation=2.0, seed=7)
    for ra, rb in zip(a, b):
        assert ra.id == rb.id
        assert np.array_equal(ra.embedding, rb.embedding)


def test_loaded_records_validate_or_fail(tmp_path):
    # silently repaired records are not allowed: a NaN must raise
    path = tmp_path / "nan.jsonl"
    obj = {"id": "n", "label": "real", "source": "s", "embedding": [float("nan"), 0.0]}
    path.write_text(json.dumps(obj).replace("NaN", "NaN") + "\n")
    with pytest.raises((DatasetFormatError, ValueError)):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            load_jsonl(path)
