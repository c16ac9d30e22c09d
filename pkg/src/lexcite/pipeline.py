"""End-to-end stages over a run directory.

Layout under ``RunConfig.out_dir``::

    prepared/   train.txt val.txt test.txt labels.txt tokens_<mode>.jsonl
    embeddings/ <mode>.lxem
    model/      model.lxcn history.csv
    eval/       report.txt confusion.csv roc_<class>.csv history.csv knn.lxtk
    ablation/   ablation.csv report.txt
    bench/      bench.csv report.txt

Every stage directory also receives the resolved run configuration.
"""

from __future__ import annotations

import csv
import json
import logging
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cnnmodel as cm
from . import evaluation as ev
from .baselines import TfidfKnn
from .config import RunConfig
from .corpus import LabelMap, carve_validation, encode_labels, load_corpus, read_manifest, stratified_split, write_manifest
from .embeddings import EmbeddingTable, load_table, train_fasttext
from .textprep import PrepConfig, document_text, preprocess_document

log = logging.getLogger(__name__)

CACHE_MODES = ("stemmed", "lemmatized")


class PipelineError(RuntimeError):
    pass


def _stage_dir(rc: RunConfig, name: str) -> Path:
    d = rc.out_dir / name
    d.mkdir(parents=True, exist_ok=True)
    rc.write_echo(d)
    return d


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise PipelineError(f"missing {path}; run `{hint}` first")
    return path


# ------------------------------------------------------------------ prepare


def token_cache_path(rc: RunConfig, mode: str) -> Path:
    return rc.out_dir / "prepared" / f"tokens_{mode}.jsonl"


def prepare(rc: RunConfig) -> Path:
    """Split the corpus and cache preprocessed tokens for both normalization modes."""
    docs = load_corpus(rc.corpus_path)
    if docs.dropped:
        log.warning("dropped %d rows with empty text or outcome", docs.dropped)
    labels = encode_labels(docs)
    spec = rc.split_spec()
    train, test = stratified_split(docs, spec)
    train, val = carve_validation(train, spec)
    out = _stage_dir(rc, "prepared")
    write_manifest(train, out / "train.txt")
    write_manifest(val, out / "val.txt")
    write_manifest(test, out / "test.txt")
    (out / "labels.txt").write_text("".join(f"{lab}\n" for lab in labels.labels), encoding="utf-8")
    for mode in CACHE_MODES:
        cfg = rc.prep_config(mode)
        with open(out / f"tokens_{mode}.jsonl", "w", encoding="utf-8") as fh:
            for d in docs:
                toks = preprocess_document(document_text(d, cfg), cfg).tokens
                fh.write(json.dumps({"id": d.case_id, "label": d.outcome, "tokens": list(toks)}) + "\n")
    log.info("prepared %d train / %d val / %d test documents, %d labels", len(train), len(val), len(test), labels.K)
    return out


@dataclass
class Prepared:
    labels: LabelMap
    tokens: dict  # case id -> token tuple
    outcome: dict  # case id -> label string
    splits: dict  # "train"/"val"/"test" -> list of case ids

    def docs(self, split: str) -> list:
        return [self.tokens[i] for i in self.splits[split]]

    def y(self, split: str) -> np.ndarray:
        return np.array([self.labels.encode(self.outcome[i]) for i in self.splits[split]], dtype=np.int64)


def load_prepared(rc: RunConfig, mode: str | None = None) -> Prepared:
    mode = mode or rc.prep.mode
    base = rc.out_dir / "prepared"
    path = _require(token_cache_path(rc, mode), "lexcite prepare")
    labels = LabelMap(tuple(read_manifest(_require(base / "labels.txt", "lexcite prepare"))))
    tokens, outcome = {}, {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            rec = json.loads(line)
            tokens[rec["id"]] = tuple(rec["tokens"])
            outcome[rec["id"]] = rec["label"]
    splits = {s: read_manifest(_require(base / f"{s}.txt", "lexcite prepare")) for s in ("train", "val", "test")}
    return Prepared(labels, tokens, outcome, splits)


def check_labels(model_labels: LabelMap, data_labels: LabelMap) -> None:
    if tuple(model_labels.labels) != tuple(data_labels.labels):
        raise PipelineError(
            f"label map mismatch: model has {list(model_labels.labels)}, data has {list(data_labels.labels)}"
        )


# ------------------------------------------------------------- embeddings


def embeddings_path(rc: RunConfig, mode: str | None = None) -> Path:
    return rc.out_dir / "embeddings" / f"{mode or rc.prep.mode}.lxem"


def train_embeddings(rc: RunConfig) -> Path:
    """Subword skipgram vectors over the training split only."""
    data = load_prepared(rc)
    table = train_fasttext(data.docs("train"), rc.embed_config(), seed=rc.seed)
    out = _stage_dir(rc, "embeddings")
    path = out / f"{rc.prep.mode}.lxem"
    table.save(path)
    log.info("embedding table: %d words, dim %d -> %s", len(table.vocab), table.dim, path)
    return path


# ------------------------------------------------------------------- model


def model_config(rc: RunConfig, data: Prepared, kernels=None) -> cm.ModelConfig:
    m = rc.model
    weights = None
    if m.class_weights == "inverse-frequency":
        counts = np.bincount(data.y("train"), minlength=data.labels.K).astype(np.float64)
        if (counts == 0).any():
            raise PipelineError("inverse-frequency weights need every class in the training split")
        weights = tuple(counts.sum() / (data.labels.K * counts))
    return cm.ModelConfig(
        num_classes=data.labels.K, kernel_sizes=tuple(kernels or m.kernel_sizes), filters=m.filters,
        dropout=m.dropout, dim=rc.embed.dim, seq_len=m.seq_len, fine_tune=m.fine_tune,
        embedding_init=m.embedding_init, class_weights=weights, lr=m.lr, batch_size=m.batch_size,
        max_epochs=m.max_epochs, patience=m.patience, seed=rc.seed,
    )


def _load_table_for(rc: RunConfig) -> EmbeddingTable | None:
    if rc.model.embedding_init != "pretrained":
        return None
    return load_table(_require(embeddings_path(rc), "lexcite train-embeddings"))


def fit_model(rc: RunConfig, data: Prepared, table, kernels=None, progress=None):
    cfg = model_config(rc, data, kernels)
    vocab = sorted({t for doc in data.docs("train") for t in doc})
    params = cm.build_model(cfg, vocab, table)
    enc = lambda s: cm.encode_set(params, data.docs(s), data.y(s), cfg.seq_len)  # noqa: E731
    best, history = cm.train(cfg, params, enc("train"), enc("val"), progress=progress)
    return cfg, best, history


def train_model(rc: RunConfig, progress=None) -> Path:
    data = load_prepared(rc)
    table = _load_table_for(rc)
    cfg, best, history = fit_model(rc, data, table, progress=progress)
    out = _stage_dir(rc, "model")
    extra = {"prep": rc.prep_config().to_dict()}
    if table is not None and rc.model.oov_subwords:
        extra["embeddings"] = str(embeddings_path(rc).resolve())
    path = out / "model.lxcn"
    cm.save_model(best, cfg, data.labels, path, extra=extra)
    history.to_csv(out / "history.csv")
    log.info("model saved to %s (best epoch %s)", path, history.best_epoch)
    return path


@dataclass
class Classifier:
    """A loaded model plus everything needed to classify raw text."""

    loaded: cm.LoadedModel
    prep: PrepConfig
    table: EmbeddingTable | None

    @classmethod
    def load(cls, path) -> "Classifier":
        loaded = cm.load_model(path)
        prep = PrepConfig.from_dict(loaded.extra["prep"]) if "prep" in loaded.extra else PrepConfig()
        table = None
        emb = loaded.extra.get("embeddings")
        if emb:
            if Path(emb).exists():
                table = load_table(emb)
            else:
                log.warning("embedding table %s not found; unknown tokens map to zero vectors", emb)
        return cls(loaded, prep, table)

    @property
    def labels(self) -> LabelMap:
        return self.loaded.labels

    def encode(self, token_docs):
        p, L = self.loaded.params, self.loaded.config.seq_len
        if self.table is None:
            return cm.encode_tokens(p, token_docs, L), None
        return cm.encode_with_oov(p, token_docs, L, self.table)

    def proba_tokens(self, token_docs, noise_sigma: float = 0.0, rng=None) -> np.ndarray:
        ids, extra = self.encode(token_docs)
        return cm.predict_proba(self.loaded.params, ids, noise_sigma=noise_sigma, noise_rng=rng, extra_rows=extra)

    def tokens(self, text: str) -> tuple:
        return preprocess_document(text, self.prep).tokens

    def proba_text(self, texts) -> np.ndarray:
        return self.proba_tokens([self.tokens(t) for t in texts])


def model_path(rc: RunConfig) -> Path:
    return rc.out_dir / "model" / "model.lxcn"


# -------------------------------------------------------------- evaluation


def evaluate(rc: RunConfig, path=None) -> dict:
    clf = Classifier.load(_require(Path(path) if path else model_path(rc), "lexcite train"))
    data = load_prepared(rc, clf.prep.mode)
    check_labels(clf.labels, data.labels)
    y = data.y("test")
    test_docs = data.docs("test")
    K = data.labels.K

    def predict(sigma, rng):
        return clf.proba_tokens(test_docs, noise_sigma=sigma, rng=rng)

    clean_acc, noisy_acc, probs, _ = ev.noise_robustness(predict, y, rc.eval.sigma, seed=rc.seed)
    m = ev.metrics(ev.confusion(probs.argmax(axis=1), y, K))
    roc = ev.roc_auc(probs, y)
    ev.attach_auc(m, roc, K)

    out = _stage_dir(rc, "eval")
    extra = {"sigma": rc.eval.sigma, "noisy_accuracy": f"{noisy_acc:.4f}",
             "noise_drop_points": f"{100 * (clean_acc - noisy_acc):.2f}"}

    knn_data = data if rc.eval.knn_mode == clf.prep.mode else load_prepared(rc, rc.eval.knn_mode)
    knn = TfidfKnn.fit(knn_data.docs("train"), knn_data.y("train"), K, k=rc.eval.knn_k)
    knn_acc = float((knn.predict(knn_data.docs("test")) == knn_data.y("test")).mean())
    knn.save(out / "knn.lxtk")
    extra["knn_accuracy"] = f"{knn_acc:.4f}"

    labels = list(data.labels.labels)
    ev.write_report(out / "report.txt", m, labels, extra)
    ev.confusion(probs.argmax(axis=1), y, K).to_csv(out / "confusion.csv", labels)
    ev.write_roc_csvs(out, roc, labels)
    hist = model_path(rc).parent / "history.csv"
    if path is None and hist.exists():
        shutil.copyfile(hist, out / "history.csv")
    return {"accuracy": m.accuracy, "noisy_accuracy": noisy_acc, "knn_accuracy": knn_acc, "report": m,
            "out": out}


# ---------------------------------------------------------------- ablation


def ablate(rc: RunConfig, configs=None) -> list:
    data = load_prepared(rc)
    table = _load_table_for(rc)
    y = data.y("test")

    def run_one(kernels):
        cfg, best, history = fit_model(rc, data, table, kernels)
        if table is not None and rc.model.oov_subwords:
            ids, extra = cm.encode_with_oov(best, data.docs("test"), cfg.seq_len, table)
        else:
            ids, extra = cm.encode_tokens(best, data.docs("test"), cfg.seq_len), None
        pred = cm.predict_proba(best, ids, extra_rows=extra).argmax(axis=1)
        m = ev.metrics(ev.confusion(pred, y, data.labels.K))
        return m.accuracy, m.macro["f1"], len(history.records)

    rows = ev.ablate(configs or rc.eval.ablation_kernels, run_one)
    out = _stage_dir(rc, "ablation")
    ev.write_ablation_csv(out / "ablation.csv", rows)
    (out / "report.txt").write_text(ev.format_ablation(rows) + "\n", encoding="utf-8")
    return rows


# ------------------------------------------------------------------- bench


def bench(rc: RunConfig, path=None) -> ev.BenchReport:
    mpath = _require(Path(path) if path else model_path(rc), "lexcite train")
    clf = Classifier.load(mpath)
    data = load_prepared(rc, clf.prep.mode)
    docs = data.docs("test")[: rc.bench.docs]

    def infer_one(doc):
        clf.proba_tokens([doc])

    report = ev.latency_bench(infer_one, docs, rc.bench.reps, rc.bench.warmup)
    p = clf.loaded.params
    report.params_without_embeddings = cm.count_parameters(p)
    report.params_with_embeddings = cm.count_parameters(p, include_embeddings=True)
    hist = mpath.parent / "history.csv"
    if hist.exists():
        with open(hist, newline="") as fh:
            report.epoch_seconds = [float(r["seconds"]) for r in csv.DictReader(fh)]
    out = _stage_dir(rc, "bench")
    ev.write_bench_csv(out / "bench.csv", report)
    (out / "report.txt").write_text("\n".join(report.to_lines()) + "\n", encoding="utf-8")
    return report
