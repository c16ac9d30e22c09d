"""Multi-kernel 1D CNN over token embeddings: build, forward, train, save/load."""

from __future__ import annotations

import copy
import csv
import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import binfmt
from . import neuralcore as nc
from .corpus import LabelMap

log = logging.getLogger(__name__)

MAGIC = b"LXCN"
VERSION = 1


class ModelError(ValueError):
    pass


class TrainingError(RuntimeError):
    pass


@dataclass
class ModelConfig:
    num_classes: int = 5
    kernel_sizes: tuple = (2, 3, 5)
    filters: int = 128
    dropout: float = 0.4
    dim: int = 500
    seq_len: int = 400
    fine_tune: bool = True
    embedding_init: str = "pretrained"
    class_weights: tuple | None = None
    lr: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 50
    patience: int = 3
    seed: int = 42

    def __post_init__(self):
        self.kernel_sizes = tuple(int(k) for k in self.kernel_sizes)
        if self.class_weights is not None:
            self.class_weights = tuple(float(a) for a in self.class_weights)
        self.validate()

    def validate(self):
        ks = self.kernel_sizes
        if not ks or len(set(ks)) != len(ks):
            raise ModelError(f"kernel sizes must be non-empty and distinct, got {ks}")
        if any(k < 1 or k > self.seq_len for k in ks):
            raise ModelError(f"every kernel size must lie in [1, seq_len={self.seq_len}], got {ks}")
        if self.filters < 1 or self.dim < 1:
            raise ModelError("filters and dim must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError(f"dropout must be in [0,1), got {self.dropout}")
        if self.num_classes < 2:
            raise ModelError("need at least 2 classes")
        if self.embedding_init not in ("pretrained", "random"):
            raise ModelError(f"embedding_init must be 'pretrained' or 'random', got {self.embedding_init!r}")
        if self.class_weights is not None and (
            len(self.class_weights) != self.num_classes or min(self.class_weights) <= 0
        ):
            raise ModelError("class_weights must be a strictly positive K-vector")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ModelError("batch_size >= 1, max_epochs >= 0 and patience >= 1 required")

    @property
    def alpha(self) -> np.ndarray:
        if self.class_weights is None:
            return np.ones(self.num_classes)
        return np.asarray(self.class_weights, dtype=np.float64)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kernel_sizes"] = list(self.kernel_sizes)
        if self.class_weights is not None:
            d["class_weights"] = list(self.class_weights)
        return d


@dataclass
class ModelParams:
    """Trainable arrays plus the token vocabulary indexing the embedding rows."""

    vocab: list
    embedding: np.ndarray
    conv: dict  # kernel size -> (W (F, k, d), b (F,)), ascending kernel order
    W_c: np.ndarray
    b_c: np.ndarray
    _index: dict = field(default=None, repr=False, compare=False)

    @property
    def token_index(self) -> dict:
        if self._index is None:
            self._index = {t: i for i, t in enumerate(self.vocab)}
        return self._index

    def arrays(self) -> dict:
        out = {"embedding": self.embedding}
        for k in sorted(self.conv):
            W, b = self.conv[k]
            out[f"conv{k}.W"] = W
            out[f"conv{k}.b"] = b
        out["classifier.W"] = self.W_c
        out["classifier.b"] = self.b_c
        return out

    @classmethod
    def from_arrays(cls, vocab, arrays: dict) -> "ModelParams":
        conv = {}
        for name in arrays:
            if name.startswith("conv") and name.endswith(".W"):
                k = int(name[4:-2])
                conv[k] = (arrays[name], arrays[f"conv{k}.b"])
        conv = {k: conv[k] for k in sorted(conv)}
        return cls(list(vocab), arrays["embedding"], conv, arrays["classifier.W"], arrays["classifier.b"])

    def copy(self) -> "ModelParams":
        return ModelParams.from_arrays(self.vocab, {k: v.copy() for k, v in self.arrays().items()})

    def astype(self, dtype) -> "ModelParams":
        return ModelParams.from_arrays(self.vocab, {k: v.astype(dtype) for k, v in self.arrays().items()})


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_acc: float
    val_loss: float
    val_acc: float
    seconds: float


@dataclass
class TrainHistory:
    records: list = field(default_factory=list)
    best_epoch: int | None = None

    def __len__(self):
        return len(self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"])
            for r in self.records:
                w.writerow([r.epoch, f"{r.train_loss:.6f}", f"{r.train_acc:.6f}",
                            f"{r.val_loss:.6f}", f"{r.val_acc:.6f}", f"{r.seconds:.4f}"])

    @property
    def epoch_seconds(self) -> list:
        return [r.seconds for r in self.records]


@dataclass
class EncodedSet:
    """Token-id matrix (N x L, -1 = padding/unknown) with class labels."""

    ids: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)


def _glorot(rng, shape, fan_in, fan_out, dtype):
    lim = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-lim, lim, size=shape).astype(dtype)


def build_model(cfg: ModelConfig, vocab, table=None, seed: int | None = None,
                dtype=np.float32) -> ModelParams:
    """Initialize parameters.

    Conv and classifier weights are Glorot-uniform (conv fan-in ``k*d``,
    fan-out ``F*k``), biases zero. Embedding rows come from ``table`` when
    ``cfg.embedding_init == "pretrained"``, else uniform in +-0.05.
    """
    cfg.validate()
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    vocab = list(vocab)
    d, F = cfg.dim, cfg.filters
    if cfg.embedding_init == "pretrained":
        if table is None:
            raise ModelError("embedding_init='pretrained' requires an embedding table")
        if table.dim != d:
            raise ModelError(f"embedding table dimension {table.dim} != model dimension {d}")
        E = np.stack([table.embed_token(t) for t in vocab]).astype(dtype) if vocab else np.zeros((0, d), dtype)
    else:
        E = rng.uniform(-0.05, 0.05, size=(len(vocab), d)).astype(dtype)
    conv = {}
    for k in sorted(cfg.kernel_sizes):
        conv[k] = (_glorot(rng, (F, k, d), k * d, F * k, dtype), np.zeros(F, dtype=dtype))
    H = F * len(cfg.kernel_sizes)
    W_c = _glorot(rng, (cfg.num_classes, H), H, cfg.num_classes, dtype)
    return ModelParams(vocab, E, conv, W_c, np.zeros(cfg.num_classes, dtype=dtype))


def count_parameters(params: ModelParams, include_embeddings: bool = False) -> int:
    n = sum(W.size + b.size for W, b in params.conv.values()) + params.W_c.size + params.b_c.size
    if include_embeddings:
        n += params.embedding.size
    return int(n)


def closed_form_parameter_count(kernel_sizes, d, F, K, V=0) -> int:
    return sum(k * d * F + F for k in kernel_sizes) + F * len(kernel_sizes) * K + K + d * V


# ------------------------------------------------------------------- encoding


def encode_tokens(params: ModelParams, docs, L: int) -> np.ndarray:
    """Map token sequences to an (N, L) id matrix; unknown tokens and padding are -1."""
    index = params.token_index
    ids = np.full((len(docs), L), -1, dtype=np.int64)
    for n, toks in enumerate(docs):
        row = [index.get(t, -1) for t in list(toks)[:L]]
        ids[n, :len(row)] = row
    return ids


def encode_with_oov(params: ModelParams, docs, L: int, table):
    """Like ``encode_tokens`` but unknown tokens get subword-composed rows from ``table``.

    Returns ``(ids, extra_rows)``; ids >= V index ``extra_rows``.
    """
    index = params.token_index
    V = len(params.vocab)
    extra, extra_index = [], {}
    ids = np.full((len(docs), L), -1, dtype=np.int64)
    for n, toks in enumerate(docs):
        for i, t in enumerate(list(toks)[:L]):
            j = index.get(t)
            if j is None:
                j = extra_index.get(t)
                if j is None:
                    j = V + len(extra)
                    extra_index[t] = j
                    extra.append(table.embed_token(t))
            ids[n, i] = j
    rows = np.stack(extra).astype(params.embedding.dtype) if extra else np.zeros((0, params.embedding.shape[1]),
                                                                                  dtype=params.embedding.dtype)
    return ids, rows


def encode_set(params: ModelParams, docs, labels, L: int) -> EncodedSet:
    return EncodedSet(encode_tokens(params, docs, L), np.asarray(labels, dtype=np.int64))


# -------------------------------------------------------------------- forward


def _graph(params: ModelParams, X: nc.Tensor, train: bool, rng, leaves: dict, dropout_rate: float):
    pooled = []
    for k, (W, b) in params.conv.items():
        Wt, bt = leaves[f"conv{k}.W"], leaves[f"conv{k}.b"]
        pooled.append(nc.max_over_time(nc.conv1d_relu(X, Wt, bt)))
    h = nc.concat(pooled, axis=1) if len(pooled) > 1 else pooled[0]
    h = nc.dropout_t(h, dropout_rate, train, rng)
    logits = nc.linear(h, leaves["classifier.W"], leaves["classifier.b"])
    return nc.softmax(logits), h


def _leaves(params: ModelParams, trainable: set) -> dict:
    return {name: nc.Tensor(a, requires_grad=name in trainable) for name, a in params.arrays().items()}


def forward(params: ModelParams, X, mode: str = "infer", rng=None, dropout_rate: float = 0.0,
            return_hidden: bool = False):
    """Class probabilities for embedded input ``X`` of shape (L, d) or (N, L, d)."""
    if hasattr(X, "X"):
        X = X.X
    X = np.asarray(X)
    single = X.ndim == 2
    if single:
        X = X[None]
    d = params.embedding.shape[1]
    if X.ndim != 3 or X.shape[2] != d:
        raise ModelError(f"input shape {X.shape} does not match embedding dim {d}")
    if X.shape[1] < max(params.conv):
        raise ModelError(f"sequence length {X.shape[1]} shorter than the largest kernel {max(params.conv)}")
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    rng = rng if rng is not None else np.random.default_rng()
    leaves = _leaves(params, set())
    probs, h = _graph(params, nc.Tensor(X.astype(params.W_c.dtype, copy=False)), mode == "train", rng,
                      leaves, dropout_rate)
    p = probs.data[0] if single else probs.data
    if return_hidden:
        return p, (h.data[0] if single else h.data)
    return p


def embed_ids(params: ModelParams, ids, extra_rows=None) -> np.ndarray:
    E = params.embedding if extra_rows is None or len(extra_rows) == 0 else np.vstack([params.embedding, extra_rows])
    return nc.embedding_lookup(nc.Tensor(E), ids).data


def predict_proba(params: ModelParams, ids, batch_size: int = 256, noise_sigma: float = 0.0,
                  noise_rng=None, extra_rows=None) -> np.ndarray:
    """Inference over an id matrix; optional additive Gaussian noise on the token rows."""
    outs = []
    for lo in range(0, len(ids), batch_size):
        chunk = ids[lo:lo + batch_size]
        X = embed_ids(params, chunk, extra_rows)
        if noise_sigma > 0:
            mask = (chunk >= 0)[..., None]
            X = X + (noise_rng.normal(0.0, noise_sigma, size=X.shape) * mask).astype(X.dtype)
        outs.append(forward(params, X, "infer"))
    if not outs:
        return np.zeros((0, params.W_c.shape[0]), dtype=params.W_c.dtype)
    return np.concatenate(outs, axis=0)


def loss_and_grads(params: ModelParams, ids, y, cfg: ModelConfig, train: bool, rng, trainable=None):
    """Weighted cross-entropy of a batch and gradients for ``trainable`` parameter names."""
    if trainable is None:
        trainable = set(params.arrays())
        if not cfg.fine_tune:
            trainable.discard("embedding")
    leaves = _leaves(params, trainable)
    X = nc.embedding_lookup(leaves["embedding"], ids)
    probs, _ = _graph(params, X, train, rng, leaves, cfg.dropout if train else 0.0)
    loss = nc.cross_entropy(probs, y, cfg.alpha)
    nc.backward(loss)
    grads = {n: leaves[n].grad for n in trainable if leaves[n].grad is not None}
    for n in trainable:
        if n not in grads:
            grads[n] = np.zeros_like(leaves[n].data)
    return float(loss.data), probs.data, grads


# ------------------------------------------------------------------- training


def evaluate_set(params: ModelParams, data: EncodedSet, cfg: ModelConfig):
    """Mean weighted loss and accuracy in inference mode."""
    probs = predict_proba(params, data.ids)
    py = np.maximum(probs[np.arange(len(data.y)), data.y], nc.LOG_CLAMP)
    loss = float(-(cfg.alpha[data.y] * np.log(py)).mean())
    acc = float((probs.argmax(axis=1) == data.y).mean())
    return loss, acc


class EarlyStopping:
    """Track the best validation loss; ``step`` returns True when training should stop."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best = np.inf
        self.best_epoch = None
        self.bad_epochs = 0

    def step(self, epoch: int, val_loss: float) -> bool:
        if val_loss < self.best:
            self.best = val_loss
            self.best_epoch = epoch
            self.bad_epochs = 0
            return False
        self.bad_epochs += 1
        return self.bad_epochs >= self.patience


def train(cfg: ModelConfig, params: ModelParams, train_set: EncodedSet, val_set: EncodedSet,
          progress=None):
    """Mini-batch Adam with early stopping on validation loss.

    Returns a copy of the parameters from the best-validation-loss epoch and
    the per-epoch history. ``progress`` is called with each ``EpochRecord``.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise TrainingError("training and validation sets must be non-empty")
    params = params.copy()
    history = TrainHistory()
    if cfg.max_epochs == 0:
        return params, history
    rng = np.random.default_rng(cfg.seed)
    state = nc.AdamState(lr=cfg.lr)
    stopper = EarlyStopping(cfg.patience)
    best = params.copy()
    arrays = params.arrays()
    for epoch in range(1, cfg.max_epochs + 1):
        t0 = time.perf_counter()
        order = rng.permutation(len(train_set))
        tot_loss, tot_correct = 0.0, 0
        for lo in range(0, len(order), cfg.batch_size):
            idx = order[lo:lo + cfg.batch_size]
            loss, probs, grads = loss_and_grads(params, train_set.ids[idx], train_set.y[idx], cfg, True, rng)
            if not np.isfinite(loss):
                raise TrainingError(
                    f"non-finite training loss in epoch {epoch}; last good epoch {stopper.best_epoch}"
                )
            nc.adam_step(arrays, grads, state)
            tot_loss += loss * len(idx)
            tot_correct += int((probs.argmax(axis=1) == train_set.y[idx]).sum())
        val_loss, val_acc = evaluate_set(params, val_set, cfg)
        if not np.isfinite(val_loss):
            raise TrainingError(f"non-finite validation loss in epoch {epoch}; last good epoch {stopper.best_epoch}")
        rec = EpochRecord(epoch, tot_loss / len(order), tot_correct / len(order), val_loss, val_acc,
                          time.perf_counter() - t0)
        history.records.append(rec)
        if progress is not None:
            progress(rec)
        log.info("epoch %d train_loss=%.4f train_acc=%.4f val_loss=%.4f val_acc=%.4f",
                 epoch, rec.train_loss, rec.train_acc, val_loss, val_acc)
        stop = stopper.step(epoch, val_loss)
        if stopper.best_epoch == epoch:
            best = params.copy()
        if stop:
            break
    history.best_epoch = stopper.best_epoch
    return best, history


# -------------------------------------------------------------- serialization


def save_model(params: ModelParams, cfg: ModelConfig, labels: LabelMap, path, extra: dict | None = None) -> None:
    """Write the model file; ``extra`` (e.g. preprocessing settings) rides in the config block."""
    arrays = params.arrays()
    with open(path, "wb") as fh:
        w = binfmt.Writer(fh, MAGIC, VERSION)
        w.json({"model": cfg.to_dict(), "extra": extra or {}, "arrays": list(arrays)})
        w.strings(list(labels.labels))
        w.strings(params.vocab)
        for a in arrays.values():
            w.array(a)


@dataclass
class LoadedModel:
    params: ModelParams
    config: ModelConfig
    labels: LabelMap
    extra: dict


def load_model(path) -> LoadedModel:
    with open(path, "rb") as fh:
        r = binfmt.Reader(fh, MAGIC, VERSION, what=str(path))
        meta = r.json()
        labels = LabelMap(tuple(r.strings()))
        vocab = r.strings()
        arrays = {name: r.array() for name in meta["arrays"]}
        r.expect_end()
    cfg = ModelConfig(**meta["model"])
    params = ModelParams.from_arrays(vocab, arrays)
    d, F, K = cfg.dim, cfg.filters, cfg.num_classes
    ok = params.embedding.shape == (len(vocab), d) and params.W_c.shape == (K, F * len(cfg.kernel_sizes))
    ok = ok and sorted(params.conv) == sorted(cfg.kernel_sizes)
    ok = ok and all(W.shape == (F, k, d) and b.shape == (F,) for k, (W, b) in params.conv.items())
    if not ok or labels.K != K:
        raise binfmt.CorruptFileError(f"{path}: parameter shapes disagree with the stored config")
    return LoadedModel(params, cfg, labels, meta.get("extra", {}))


def deep_copy_config(cfg: ModelConfig, **changes) -> ModelConfig:
    d = copy.deepcopy(cfg.to_dict())
    d.update(changes)
    return ModelConfig(**d)
