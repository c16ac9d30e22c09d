"""TF-IDF features with an exact cosine k-nearest-neighbour classifier."""

from __future__ import annotations

import logging
import math
from collections import Counter
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import binfmt

log = logging.getLogger(__name__)

MAGIC = b"LXTK"
VERSION = 1


class BaselineError(ValueError):
    pass


@dataclass
class TfidfModel:
    vocab: list
    df: np.ndarray
    n_docs: int

    def __post_init__(self):
        self.index = {t: i for i, t in enumerate(self.vocab)}
        self.df = np.asarray(self.df, dtype=np.int64)
        self.idf = np.log((1.0 + self.n_docs) / (1.0 + self.df)) + 1.0

    def __len__(self):
        return len(self.vocab)


def tfidf_fit(train_docs) -> TfidfModel:
    """``idf(t) = ln((1 + N) / (1 + df(t))) + 1`` over the training documents."""
    docs = [list(d) for d in train_docs]
    if not docs:
        raise BaselineError("cannot fit TF-IDF on an empty corpus")
    df = Counter()
    for d in docs:
        df.update(set(d))
    vocab = sorted(df)
    return TfidfModel(vocab, np.array([df[t] for t in vocab], dtype=np.int64), len(docs))


def tfidf_transform(model: TfidfModel, doc) -> dict:
    """Sparse ``{term index: weight}``, L2-normalized; empty for all-OOV documents."""
    counts = Counter(model.index[t] for t in doc if t in model.index)
    vec = {i: c * model.idf[i] for i, c in counts.items()}
    norm = math.sqrt(sum(v * v for v in vec.values()))
    if norm == 0:
        return {}
    return {i: v / norm for i, v in sorted(vec.items())}


def to_csr(vectors, dim: int) -> sp.csr_matrix:
    indptr, indices, data = [0], [], []
    for v in vectors:
        indices.extend(v.keys())
        data.extend(v.values())
        indptr.append(len(indices))
    return sp.csr_matrix((np.asarray(data, dtype=np.float64), np.asarray(indices, dtype=np.int64),
                          np.asarray(indptr, dtype=np.int64)), shape=(len(vectors), dim))


@dataclass
class KnnIndex:
    vectors: sp.csr_matrix  # (N, dim) rows of unit norm; all-zero rows are flagged in ``zero``
    labels: np.ndarray
    num_classes: int
    k: int = 5

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        X = sp.csr_matrix(self.vectors, dtype=np.float64)
        norms = np.sqrt(np.asarray(X.multiply(X).sum(axis=1)).ravel())
        self.zero = norms == 0
        scale = np.where(self.zero, 1.0, norms)
        needs = np.abs(scale - 1.0) > 1e-12
        self.vectors = sp.diags(np.where(needs, 1.0 / scale, 1.0)) @ X if needs.any() else X
        self.vectors = sp.csr_matrix(self.vectors)
        counts = np.bincount(self.labels, minlength=self.num_classes)
        self.majority = int(np.argmax(counts))

    def similarities(self, q: np.ndarray) -> np.ndarray:
        return np.asarray(self.vectors @ q).ravel()


def knn_build(vectors, labels, num_classes: int, k: int = 5) -> KnnIndex:
    if len(labels) == 0:
        raise BaselineError("cannot build a KNN index without training vectors")
    return KnnIndex(vectors, labels, num_classes, k)


def knn_classify(index: KnnIndex, query, k: int | None = None) -> int:
    """Majority vote among the ``k`` most cosine-similar training vectors.

    Similarity ties go to the lower training ordinal, vote ties to the lower
    class index. A zero query falls back to the global majority class.
    """
    k = index.k if k is None else k
    if k < 1:
        raise BaselineError("k must be >= 1")
    q = _dense_query(query, index.vectors.shape[1])
    nq = np.linalg.norm(q)
    if nq == 0:
        log.warning("zero query vector; predicting global majority class %d", index.majority)
        return index.majority
    sims = index.similarities(q / nq)
    # stable sort on -similarity keeps lower ordinals first among equals
    nearest = np.argsort(-sims, kind="stable")[:k]
    votes = np.bincount(index.labels[nearest], minlength=index.num_classes)
    return int(np.argmax(votes))


def _dense_query(query, dim: int) -> np.ndarray:
    if isinstance(query, dict):
        q = np.zeros(dim)
        if query:
            q[np.fromiter(query.keys(), dtype=np.int64)] = np.fromiter(query.values(), dtype=np.float64)
        return q
    if sp.issparse(query):
        return np.asarray(query.todense()).ravel().astype(np.float64)
    return np.asarray(query, dtype=np.float64).ravel()


def knn_classify_batch(index: KnnIndex, queries, k: int | None = None) -> np.ndarray:
    return np.array([knn_classify(index, q, k) for q in queries], dtype=np.int64)


@dataclass
class TfidfKnn:
    """Fitted baseline: TF-IDF vocabulary plus the KNN index over training documents."""

    tfidf: TfidfModel
    index: KnnIndex

    @classmethod
    def fit(cls, train_docs, labels, num_classes: int, k: int = 5) -> "TfidfKnn":
        docs = [list(d) for d in train_docs]
        model = tfidf_fit(docs)
        X = to_csr([tfidf_transform(model, d) for d in docs], len(model))
        return cls(model, knn_build(X, labels, num_classes, k))

    def vectors(self, docs) -> list:
        return [tfidf_transform(self.tfidf, d) for d in docs]

    def predict(self, docs, k: int | None = None) -> np.ndarray:
        return knn_classify_batch(self.index, self.vectors(docs), k)

    def predict_scores(self, docs, k: int | None = None) -> np.ndarray:
        """Neighbour vote fractions per class, usable as ROC scores."""
        k = self.index.k if k is None else k
        X = self.vectors(docs)
        out = np.zeros((len(X), self.index.num_classes))
        for n, v in enumerate(X):
            if not v:
                out[n, self.index.majority] = 1.0
                continue
            sims = self.index.similarities(_dense_query(v, len(self.tfidf)))
            nearest = np.argsort(-sims, kind="stable")[:k]
            out[n] = np.bincount(self.index.labels[nearest], minlength=self.index.num_classes) / len(nearest)
        return out

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            w = binfmt.Writer(fh, MAGIC, VERSION)
            w.json({"n_docs": self.tfidf.n_docs, "k": self.index.k, "num_classes": self.index.num_classes})
            w.strings(self.tfidf.vocab)
            w.array(self.tfidf.df)
            X = self.index.vectors
            w.array(X.indptr.astype(np.int64))
            w.array(X.indices.astype(np.int64))
            w.array(X.data.astype(np.float64))
            w.array(self.index.labels)

    @classmethod
    def load(cls, path) -> "TfidfKnn":
        with open(path, "rb") as fh:
            r = binfmt.Reader(fh, MAGIC, VERSION, what=str(path))
            meta = r.json()
            vocab = r.strings()
            df = r.array()
            indptr, indices, data = r.array(), r.array(), r.array()
            labels = r.array()
            r.expect_end()
        X = sp.csr_matrix((data.astype(np.float64), indices, indptr), shape=(len(labels), len(vocab)))
        return cls(TfidfModel(vocab, df, meta["n_docs"]), KnnIndex(X, labels, meta["num_classes"], meta["k"]))
