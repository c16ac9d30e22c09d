"""Subword-aware skipgram embeddings with negative sampling.

A token is represented by its own word vector (when in vocabulary) plus one
vector per hashed character n-gram of ``<token>``; the representation is the
mean of those rows. Only hash buckets touched by training words are stored;
an unseen bucket contributes a zero vector.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass
from pathlib import Path

import numba
import numpy as np

from . import binfmt

MAGIC = b"LXEM"
VERSION = 1

HASH_OFFSET = 14695981039346656037
HASH_MULT = 1099511628211
_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class EmbedConfig:
    dim: int = 500
    window: int = 3
    min_count: int = 2
    minn: int = 3
    maxn: int = 6
    buckets: int = 2_000_000
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.05

    def __post_init__(self):
        if self.dim < 1 or self.window < 1 or self.buckets < 1:
            raise ValueError("dim, window and buckets must be >= 1")
        if not 1 <= self.minn <= self.maxn:
            raise ValueError(f"need 1 <= minn <= maxn, got [{self.minn}, {self.maxn}]")
        if self.min_count < 1 or self.negatives < 0 or self.epochs < 0 or self.lr <= 0:
            raise ValueError("invalid trainer hyperparameters")


class EmbeddingError(ValueError):
    pass


def subword_hash(unit: str) -> int:
    """64-bit polynomial hash of the UTF-8 bytes: h <- h*1099511628211 + byte (mod 2**64)."""
    h = HASH_OFFSET
    for b in unit.encode("utf-8"):
        h = (h * HASH_MULT + b) & _MASK64
    return h


def subword_units(word: str, minn: int = 3, maxn: int = 6) -> list[str]:
    """Character n-grams of ``<word>`` for n in [minn, maxn], then ``<word>`` itself."""
    if not word:
        raise EmbeddingError("cannot extract subwords of an empty word")
    w = f"<{word}>"
    units = []
    for n in range(minn, maxn + 1):
        for i in range(len(w) - n + 1):
            g = w[i:i + n]
            if g != w:
                units.append(g)
    units.append(w)
    return units


def extract_subwords(word: str, minn: int = 3, maxn: int = 6, buckets: int = 2_000_000) -> list[int]:
    return [subword_hash(u) % buckets for u in subword_units(word, minn, maxn)]


@dataclass
class SequenceMatrix:
    X: np.ndarray
    length: int


class EmbeddingTable:
    def __init__(self, vocab, word_vectors, bucket_ids, subword_vectors, config: EmbedConfig):
        self.vocab = list(vocab)
        self.word_index = {w: i for i, w in enumerate(self.vocab)}
        self.word_vectors = np.asarray(word_vectors, dtype=np.float32)
        self.bucket_ids = np.asarray(bucket_ids, dtype=np.int64)
        self.subword_vectors = np.asarray(subword_vectors, dtype=np.float32)
        self.config = config
        self._bucket_row = {int(b): i for i, b in enumerate(self.bucket_ids)}
        self._cache: dict[str, np.ndarray] = {}
        if self.word_vectors.shape != (len(self.vocab), config.dim):
            raise EmbeddingError(f"word matrix shape {self.word_vectors.shape} does not match vocab/dim")
        if self.subword_vectors.shape != (len(self.bucket_ids), config.dim):
            raise EmbeddingError("subword matrix shape does not match bucket index")

    @property
    def dim(self) -> int:
        return self.config.dim

    def __contains__(self, word):
        return word in self.word_index

    def embed_token(self, word: str) -> np.ndarray:
        v = self._cache.get(word)
        if v is not None:
            return v
        cfg = self.config
        acc = np.zeros(cfg.dim, dtype=np.float64)
        n = 0
        i = self.word_index.get(word)
        if i is not None:
            acc += self.word_vectors[i]
            n += 1
        for b in extract_subwords(word, cfg.minn, cfg.maxn, cfg.buckets):
            r = self._bucket_row.get(b)
            if r is not None:
                acc += self.subword_vectors[r]
            n += 1
        v = (acc / n).astype(np.float32)
        v.setflags(write=False)
        self._cache[word] = v
        return v

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            w = binfmt.Writer(fh, MAGIC, VERSION)
            w.json(asdict(self.config))
            w.strings(self.vocab)
            w.array(self.word_vectors)
            w.array(self.bucket_ids)
            w.array(self.subword_vectors)

    @classmethod
    def load(cls, path) -> "EmbeddingTable":
        with open(path, "rb") as fh:
            r = binfmt.Reader(fh, MAGIC, VERSION, what=str(path))
            cfg = EmbedConfig(**r.json())
            vocab = r.strings()
            wv = r.array()
            ids = r.array()
            sv = r.array()
            r.expect_end()
        try:
            return cls(vocab, wv, ids, sv, cfg)
        except EmbeddingError as e:
            raise binfmt.CorruptFileError(f"{path}: {e}") from None


def embed_token(table: EmbeddingTable, word: str) -> np.ndarray:
    return table.embed_token(word)


def mean_pool(table: EmbeddingTable, tokens) -> np.ndarray:
    tokens = list(tokens)
    if not tokens:
        raise EmbeddingError("mean_pool of an empty token sequence is undefined")
    acc = np.zeros(table.dim, dtype=np.float64)
    for t in tokens:
        acc += table.embed_token(t)
    return (acc / len(tokens)).astype(np.float32)


def sequence_matrix(table: EmbeddingTable, tokens, L: int, max_kernel: int = 1) -> SequenceMatrix:
    """Stack token vectors into an ``L x d`` matrix, truncating or zero-padding."""
    if L < max_kernel:
        raise EmbeddingError(f"sequence length {L} is smaller than the largest kernel {max_kernel}")
    tokens = list(tokens)[:L]
    X = np.zeros((L, table.dim), dtype=np.float32)
    for i, t in enumerate(tokens):
        X[i] = table.embed_token(t)
    return SequenceMatrix(X, len(tokens))


# ---------------------------------------------------------------- training


@numba.njit(cache=True)
def _sample_negative(cdf, avoid):
    t = avoid
    for _ in range(16):
        t = np.searchsorted(cdf, np.random.random(), side="right")
        if t >= cdf.shape[0]:
            t = cdf.shape[0] - 1
        if t != avoid:
            return t
    return t


@numba.njit(cache=True)
def _pair_update(inp, out, units, target, cdf, negatives, lr, hidden, grad):
    d = inp.shape[1]
    n_units = units.shape[0]
    for j in range(d):
        s = 0.0
        for u in range(n_units):
            s += inp[units[u], j]
        hidden[j] = s / n_units
        grad[j] = 0.0
    loss = 0.0
    for k in range(negatives + 1):
        if k == 0:
            t, label = target, 1.0
        else:
            t, label = _sample_negative(cdf, target), 0.0
        score = 0.0
        for j in range(d):
            score += out[t, j] * hidden[j]
        if score > 30.0:
            p = 1.0
        elif score < -30.0:
            p = 0.0
        else:
            p = 1.0 / (1.0 + np.exp(-score))
        if label > 0:
            loss -= np.log(max(p, 1e-12))
        else:
            loss -= np.log(max(1.0 - p, 1e-12))
        alpha = lr * (label - p)
        for j in range(d):
            grad[j] += alpha * out[t, j]
            out[t, j] += alpha * hidden[j]
    # every unit receives the full hidden-layer gradient
    for u in range(n_units):
        for j in range(d):
            inp[units[u], j] += grad[j]
    return loss


@numba.njit(cache=True)
def _run_epoch(inp, out, tokens, doc_ptr, unit_ptr, unit_idx, cdf, window, negatives,
               lr0, step0, total_steps, seed):
    np.random.seed(seed)
    d = inp.shape[1]
    hidden = np.zeros(d, dtype=np.float64)
    grad = np.zeros(d, dtype=np.float64)
    step = step0
    loss = 0.0
    pairs = 0
    for doc in range(doc_ptr.shape[0] - 1):
        lo, hi = doc_ptr[doc], doc_ptr[doc + 1]
        for i in range(lo, hi):
            lr = lr0 * (1.0 - step / total_steps)
            w = tokens[i]
            units = unit_idx[unit_ptr[w]:unit_ptr[w + 1]]
            for c in range(max(lo, i - window), min(hi, i + window + 1)):
                if c == i:
                    continue
                loss += _pair_update(inp, out, units, tokens[c], cdf, negatives, lr, hidden, grad)
                pairs += 1
            step += 1
    return loss, pairs


@numba.njit(cache=True)
def _batch_loss(inp, out, unit_ptr, unit_idx, centers, contexts, negs):
    d = inp.shape[1]
    total = 0.0
    for b in range(centers.shape[0]):
        w = centers[b]
        units = unit_idx[unit_ptr[w]:unit_ptr[w + 1]]
        hidden = np.zeros(d)
        for u in range(units.shape[0]):
            for j in range(d):
                hidden[j] += inp[units[u], j]
        hidden /= units.shape[0]
        for k in range(negs.shape[1] + 1):
            t = contexts[b] if k == 0 else negs[b, k - 1]
            s = 0.0
            for j in range(d):
                s += out[t, j] * hidden[j]
            p = 1.0 / (1.0 + np.exp(-s))
            total -= np.log(max(p if k == 0 else 1.0 - p, 1e-12))
    return total / centers.shape[0]


class SkipgramTrainer:
    """Stateful skipgram trainer; ``train_fasttext`` is the one-shot wrapper."""

    def __init__(self, corpus, cfg: EmbedConfig, seed: int = 0):
        self.cfg = cfg
        self.seed = int(seed)
        docs = [list(seq) for seq in corpus]
        if not docs or not any(docs):
            raise EmbeddingError("cannot train embeddings on an empty corpus")
        counts = Counter(t for doc in docs for t in doc)
        vocab = sorted((t for t, c in counts.items() if c >= cfg.min_count), key=lambda t: (-counts[t], t))
        if not vocab:
            raise EmbeddingError(f"vocabulary empty after min_count={cfg.min_count} cutoff")
        self.vocab = vocab
        index = {w: i for i, w in enumerate(vocab)}
        V = len(vocab)

        ids, ptr = [], [0]
        for doc in docs:
            ids.extend(index[t] for t in doc if t in index)
            ptr.append(len(ids))
        self.tokens = np.asarray(ids, dtype=np.int64)
        self.doc_ptr = np.asarray(ptr, dtype=np.int64)

        per_word = [extract_subwords(w, cfg.minn, cfg.maxn, cfg.buckets) for w in vocab]
        self.bucket_ids = np.asarray(sorted({b for bs in per_word for b in bs}), dtype=np.int64)
        row_of = {int(b): V + i for i, b in enumerate(self.bucket_ids)}
        unit_idx, unit_ptr = [], [0]
        for i, bs in enumerate(per_word):
            unit_idx.append(i)
            unit_idx.extend(row_of[b] for b in bs)
            unit_ptr.append(len(unit_idx))
        self.unit_idx = np.asarray(unit_idx, dtype=np.int64)
        self.unit_ptr = np.asarray(unit_ptr, dtype=np.int64)

        freq = np.array([counts[w] for w in vocab], dtype=np.float64) ** 0.75
        self.cdf = np.cumsum(freq / freq.sum())

        rng = np.random.default_rng(self.seed)
        n_rows = V + len(self.bucket_ids)
        self.inp = rng.uniform(-1.0 / cfg.dim, 1.0 / cfg.dim, size=(n_rows, cfg.dim)).astype(np.float32)
        self.out = np.zeros((V, cfg.dim), dtype=np.float32)
        self.epoch = 0
        self.losses: list[float] = []

    @property
    def total_steps(self) -> int:
        return max(1, self.cfg.epochs * len(self.tokens))

    def run_epoch(self) -> float:
        """One pass over the corpus; returns the mean pair loss seen during the pass."""
        cfg = self.cfg
        loss, pairs = _run_epoch(
            self.inp, self.out, self.tokens, self.doc_ptr, self.unit_ptr, self.unit_idx, self.cdf,
            cfg.window, cfg.negatives, cfg.lr, float(self.epoch * len(self.tokens)),
            float(self.total_steps), (self.seed * 1_000_003 + self.epoch) % (2**32),
        )
        self.epoch += 1
        mean = loss / max(pairs, 1)
        self.losses.append(mean)
        if not np.all(np.isfinite(self.inp)):
            raise EmbeddingError(f"non-finite embedding values after epoch {self.epoch}")
        return mean

    def micro_batch(self, size: int, seed: int = 0):
        """Fixed (center, context, negatives) triples drawn from the corpus for loss probes."""
        rng = np.random.default_rng(seed)
        centers, contexts = [], []
        w = self.cfg.window
        for _ in range(50 * size):
            if len(centers) == size:
                break
            doc = int(rng.integers(len(self.doc_ptr) - 1))
            lo, hi = self.doc_ptr[doc], self.doc_ptr[doc + 1]
            if hi - lo < 2:
                continue
            i = int(rng.integers(lo, hi))
            c = int(rng.integers(max(lo, i - w), min(hi, i + w + 1)))
            if c == i:
                continue
            centers.append(self.tokens[i])
            contexts.append(self.tokens[c])
        negs = np.searchsorted(self.cdf, rng.random((len(centers), self.cfg.negatives)), side="right")
        negs = np.minimum(negs, len(self.vocab) - 1)
        return np.asarray(centers, dtype=np.int64), np.asarray(contexts, dtype=np.int64), negs.astype(np.int64)

    def batch_loss(self, batch) -> float:
        centers, contexts, negs = batch
        return float(_batch_loss(self.inp, self.out, self.unit_ptr, self.unit_idx, centers, contexts, negs))

    def table(self) -> EmbeddingTable:
        V = len(self.vocab)
        return EmbeddingTable(self.vocab, self.inp[:V].copy(), self.bucket_ids.copy(),
                              self.inp[V:].copy(), self.cfg)


def train_fasttext(corpus, cfg: EmbedConfig | None = None, seed: int = 0) -> EmbeddingTable:
    """Train on token sequences from the training split; deterministic given ``seed``."""
    trainer = SkipgramTrainer(corpus, cfg or EmbedConfig(), seed)
    for _ in range(trainer.cfg.epochs):
        trainer.run_epoch()
    return trainer.table()


def load_table(path) -> EmbeddingTable:
    return EmbeddingTable.load(Path(path))
