"""Acceptance gate: one test per primary criterion, each printing a PASS/FAIL line."""

import itertools
import json
import time

import numpy as np
import pytest

from lexcite import cnnmodel as cm
from lexcite import evaluation as ev
from lexcite.cli import main
from lexcite.embeddings import load_table
from lexcite.evaluation import read_report
from lexcite.gradcheck import check_gradients
from lexcite.pipeline import Classifier
from lexcite.synthetic import planted_phrase_corpus
from lexcite.textprep import clean_text, lemmatize, porter_stem


@pytest.fixture
def verdict(capsys):
    def emit(name, ok, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
        assert ok, f"{name}: {detail}"

    return emit


def test_gradient_oracle(verdict):
    cfg = cm.ModelConfig(num_classes=3, kernel_sizes=(2, 3), filters=4, dim=8, seq_len=7,
                         class_weights=(1.0, 2.0, 0.5))
    t0 = time.perf_counter()
    res = check_gradients(cfg, vocab_size=10, h=1e-3, min_margin=1e-2, seed=0)
    dt = time.perf_counter() - t0
    verdict("gradient oracle", res.max_rel_error <= 1e-4 and dt < 10,
            f"max rel err {res.max_rel_error:.2e} over {res.checked} params (worst {res.worst}), "
            f"margin {res.margin:.3f}, {dt:.2f}s")


def test_normalization(verdict):
    rng = np.random.default_rng(0)
    cfg = cm.ModelConfig(num_classes=5, kernel_sizes=(2, 3, 5), filters=16, dim=20, seq_len=12,
                         embedding_init="random")
    params = cm.build_model(cfg, [])
    worst = 0.0
    for i in range(1000):
        scale = 10.0 ** rng.uniform(-2, 2)
        X = rng.normal(0.0, scale, size=(cfg.seq_len, cfg.dim))
        p = cm.forward(params, X, "train" if i % 2 else "infer", rng, dropout_rate=0.4)
        assert np.all(p >= 0)
        worst = max(worst, abs(float(p.sum(dtype=np.float64)) - 1.0))
    verdict("normalization", worst <= 1e-6, f"max |sum-1| = {worst:.2e} over 1000 inputs")


def test_parameter_count(verdict):
    params = cm.build_model(cm.ModelConfig(embedding_init="random"), [])
    n = cm.count_parameters(params)
    closed = cm.closed_form_parameter_count((2, 3, 5), 500, 128, 5)
    verdict("parameter count", n == 642_309 == closed, f"count {n}, closed form {closed}")


def test_synthetic_separability(synthetic_run, verdict):
    rep = read_report(synthetic_run.out / "eval" / "report.txt")
    acc = float(rep["accuracy"])
    epochs = len((synthetic_run.out / "model" / "history.csv").read_text().splitlines()) - 1
    ok = acc >= 0.95 and epochs <= 20 and synthetic_run.seconds < 120
    verdict("synthetic separability", ok,
            f"test accuracy {acc:.4f} after {epochs} epochs, pipeline {synthetic_run.seconds:.1f}s")


def test_preprocessing_vectors(verdict):
    porter = {"caresses": "caress", "ponies": "poni", "citing": "cite"}
    lemmas = {"cited": "cite", "cites": "cite"}
    bad = [w for w, s in porter.items() if porter_stem(w) != s]
    bad += [w for w, s in lemmas.items() if lemmatize(w) != s]
    rng = np.random.default_rng(11)
    bodies = [d.body for d in planted_phrase_corpus(200, 3, seed=3)]
    failures = 0
    for _ in range(1000):
        body = bodies[int(rng.integers(len(bodies)))]
        a = int(rng.integers(0, len(body)))
        b = int(rng.integers(a, min(len(body), a + 300) + 1))
        once = clean_text(body[a:b])
        failures += clean_text(once) != once
    verdict("preprocessing vectors", not bad and failures == 0,
            f"vector mismatches {bad or 'none'}, idempotence failures {failures}/1000")


def test_metric_oracles(verdict):
    counts = np.diag([1216, 1216, 1216, 1216, 1215]).astype(np.int64)
    counts[2, 4] = 171
    acc = ev.ConfusionMatrix(counts).accuracy
    rng = np.random.default_rng(0)
    instances, mismatches = 0, 0
    for n in range(2, 7):
        for ranks in itertools.combinations_with_replacement(range(n), n):
            for labels in itertools.product([0, 1], repeat=n):
                y = np.array(labels)
                if y.all() or not y.any():
                    continue
                order = rng.permutation(n)
                s = np.array(ranks, dtype=np.float64)[order] / n
                yy = y[order]
                auc = ev.roc_auc(np.c_[1 - s, s], yy).per_class[1].auc
                pos, neg = s[yy == 1], s[yy == 0]
                wins = sum(2 if p > q else 1 if p == q else 0 for p in pos for q in neg)
                instances += 1
                mismatches += auc != wins / (2 * len(pos) * len(neg))
    ok = abs(acc - 0.97264) <= 1e-9 and mismatches == 0
    verdict("metric oracles", ok, f"accuracy {acc:.9f}; AUC vs rank statistic: {mismatches} "
                                  f"mismatches over {instances} instances")


def test_ablation_harness(synthetic_run, verdict):
    rc = main(["ablate", *synthetic_run.args(), "--configs", "3;3,4;2,3,5"])
    lines = (synthetic_run.out / "ablation" / "ablation.csv").read_text().splitlines()
    rows = [ln.split(",") for ln in lines[1:]]
    ok = rc == 0 and [r[0] for r in rows] == ["3", "3 4", "2 3 5"] and all(r[1] for r in rows)
    verdict("ablation harness", ok, "; ".join(f"[{r[0]}] acc {r[1] or 'failed'}" for r in rows))


def test_robustness(synthetic_run, verdict):
    clf = Classifier.load(synthetic_run.out / "model" / "model.lxcn")
    test_ids = (synthetic_run.out / "prepared" / "test.txt").read_text().split()
    rep = read_report(synthetic_run.out / "eval" / "report.txt")
    cache = {}
    with open(synthetic_run.out / "prepared" / f"tokens_{clf.prep.mode}.jsonl") as fh:
        for line in fh:
            r = json.loads(line)
            cache[r["id"]] = tuple(r["tokens"])
    docs = [cache[i] for i in test_ids]
    clean = clf.proba_tokens(docs)
    zero = clf.proba_tokens(docs, noise_sigma=0.0, rng=np.random.default_rng(1))
    drop = float(rep["noise_drop_points"])
    ok = np.array_equal(clean, zero) and float(rep["sigma"]) == 0.05 and drop <= 5.0
    verdict("robustness", ok, f"sigma=0 bit-identical {np.array_equal(clean, zero)}; sigma=0.05 accuracy "
                              f"{rep['accuracy']} -> {rep['noisy_accuracy']} ({drop:.2f} pt drop)")


def test_serialization(synthetic_run, verdict, tmp_path):
    mpath = synthetic_run.out / "model" / "model.lxcn"
    epath = synthetic_run.out / "embeddings" / "lemmatized.lxem"
    m1 = cm.load_model(mpath)
    cm.save_model(m1.params, m1.config, m1.labels, tmp_path / "m.lxcn", extra=m1.extra)
    m2 = cm.load_model(tmp_path / "m.lxcn")
    same_params = all(np.array_equal(a, b) and a.dtype == b.dtype
                      for a, b in zip(m1.params.arrays().values(), m2.params.arrays().values()))
    probe = np.random.default_rng(0).integers(-1, len(m1.params.vocab), size=(16, m1.config.seq_len))
    same_out = np.array_equal(cm.predict_proba(m1.params, probe), cm.predict_proba(m2.params, probe))
    t1 = load_table(epath)
    t1.save(tmp_path / "t.lxem")
    t2 = load_table(tmp_path / "t.lxem")
    same_table = (np.array_equal(t1.word_vectors, t2.word_vectors)
                  and np.array_equal(t1.subword_vectors, t2.subword_vectors) and t1.vocab == t2.vocab)
    same_bytes = (tmp_path / "m.lxcn").read_bytes() == mpath.read_bytes() and \
        (tmp_path / "t.lxem").read_bytes() == epath.read_bytes()
    verdict("serialization", same_params and same_out and same_table and same_bytes,
            f"params {same_params}, probe outputs {same_out}, table {same_table}, files byte-equal {same_bytes}")


def test_baseline_sanity(synthetic_run, verdict):
    rep = read_report(synthetic_run.out / "eval" / "report.txt")
    knn, cnn = float(rep["knn_accuracy"]), float(rep["accuracy"])
    chance = 1 / 3
    verdict("baseline sanity", knn >= chance + 0.30 and knn < cnn,
            f"KNN {knn:.4f} vs chance {chance:.4f} + 0.30 and CNN {cnn:.4f}")
