import csv
from collections import Counter

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lexcite.corpus import (
    CorpusError,
    Document,
    DocumentSet,
    LabelMap,
    SplitSpec,
    carve_validation,
    encode_labels,
    load_corpus,
    read_manifest,
    stratified_split,
    write_corpus,
    write_manifest,
)


def _write_rows(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


def _docs(class_sizes):
    docs, n = [], 0
    for label, size in class_sizes.items():
        for _ in range(size):
            n += 1
            docs.append(Document(f"Case{n}", label, "", f"text {n}"))
    return DocumentSet(docs)


def test_load_corpus_normalizes_header_and_drops_empty(tmp_path):
    p = _write_rows(tmp_path / "c.csv", ["Case ID", "Case Outcome", "Case Title", "Case Text"], [
        ["Case1", "cited", "A v B", "The court cited X."],
        ["Case2", "", "C v D", "no outcome"],
        ["Case3", "applied", "E v F", "   "],
        ["Case4", "applied", "G v H", "text, with \"quotes\"\nand a newline"],
    ])
    ds = load_corpus(p)
    assert ds.ids() == ["Case1", "Case4"]
    assert ds.dropped == 2
    assert ds[1].body == "text, with \"quotes\"\nand a newline"


def test_missing_file_names_path(tmp_path):
    with pytest.raises(CorpusError, match="nope.csv"):
        load_corpus(tmp_path / "nope.csv")


def test_malformed_header(tmp_path):
    p = _write_rows(tmp_path / "c.csv", ["case_id", "case_outcome", "case_text"], [["1", "a", "b"]])
    with pytest.raises(CorpusError, match="case_title"):
        load_corpus(p)


def test_row_field_count_mismatch_reports_row(tmp_path):
    p = _write_rows(tmp_path / "c.csv", ["case_id", "case_outcome", "case_title", "case_text"],
                    [["1", "a", "t", "b"], ["2", "a", "t"]])
    with pytest.raises(CorpusError, match="row 3"):
        load_corpus(p)


def test_duplicate_case_id(tmp_path):
    p = _write_rows(tmp_path / "c.csv", ["case_id", "case_outcome", "case_title", "case_text"],
                    [["1", "a", "t", "b"], ["1", "a", "t", "c"]])
    with pytest.raises(CorpusError, match="duplicate"):
        load_corpus(p)


def test_write_then_load_round_trip(tmp_path):
    ds = _docs({"cited": 3, "applied": 2})
    write_corpus(ds, tmp_path / "c.csv")
    assert load_corpus(tmp_path / "c.csv").docs == ds.docs


def test_label_map_is_sorted_and_dense():
    lm = encode_labels(_docs({"followed": 1, "applied": 1, "cited": 1}))
    assert lm.labels == ("applied", "cited", "followed")
    assert [lm.encode(x) for x in lm.labels] == [0, 1, 2]
    assert lm.decode(2) == "followed"
    with pytest.raises(CorpusError):
        lm.encode("overruled")
    with pytest.raises(CorpusError):
        LabelMap(("only",))


def test_split_sizes_at_full_corpus_scale():
    ds = _docs({f"c{k}": 5000 for k in range(5)})
    spec = SplitSpec()
    train, test = stratified_split(ds, spec)
    assert (len(train), len(test)) == (18750, 6250)
    train2, val = carve_validation(train, spec)
    assert (len(train2), len(val)) == (16875, 1875)
    assert Counter(d.outcome for d in test) == {f"c{k}": 1250 for k in range(5)}
    assert Counter(d.outcome for d in val) == {f"c{k}": 375 for k in range(5)}


def test_split_rejects_singleton_class():
    with pytest.raises(CorpusError, match="lonely"):
        stratified_split(_docs({"a": 10, "lonely": 1}), SplitSpec())


def test_carve_with_zero_fraction_is_an_error():
    with pytest.raises(CorpusError):
        carve_validation(_docs({"a": 10, "b": 10}), SplitSpec(validation_fraction_of_train=0.0))


@settings(max_examples=60, deadline=None)
@given(sizes=st.lists(st.integers(2, 60), min_size=2, max_size=5),
       frac=st.floats(0.5, 0.95), seed=st.integers(0, 10_000))
def test_split_partitions_and_stratifies(sizes, frac, seed):
    ds = _docs({f"c{i}": n for i, n in enumerate(sizes)})
    spec = SplitSpec(train_fraction=frac, seed=seed)
    try:
        train, test = stratified_split(ds, spec)
    except CorpusError:
        return  # a class too small to keep a training member
    tr, te = set(train.ids()), set(test.ids())
    assert not tr & te
    assert tr | te == set(ds.ids())
    counts = Counter(d.outcome for d in test)
    for i, n in enumerate(sizes):
        # per-class test count is the floor of its share, never more than n - 1
        assert counts.get(f"c{i}", 0) == int((1.0 - frac) * n + 1e-9)
    again = stratified_split(ds, spec)
    assert again[1].ids() == test.ids()


def test_manifest_round_trip(tmp_path):
    ds = _docs({"a": 3})
    write_manifest(ds, tmp_path / "m.txt")
    assert read_manifest(tmp_path / "m.txt") == ds.ids()
    assert ds.subset(["Case3", "Case1"]).ids() == ["Case3", "Case1"]
