"""Central finite-difference check of the composed model's analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import cnnmodel as cm


@dataclass
class GradCheckResult:
    max_rel_error: float
    worst: str
    checked: int
    margin: float
    seed: int


def kink_margin(params: cm.ModelParams, ids) -> float:
    """Distance of the point from the nearest non-smooth region.

    The smaller of the smallest |ReLU pre-activation| and the smallest gap
    between the top two entries of each max-pooled feature map.
    """
    X = cm.embed_ids(params, ids).astype(np.float64)
    margin = np.inf
    for k, (W, b) in params.conv.items():
        win = np.lib.stride_tricks.sliding_window_view(X, k, axis=1)  # (N, m, d, k)
        pre = np.einsum("nmdk,fkd->nmf", win, W.astype(np.float64)) + b
        margin = min(margin, float(np.abs(pre).min()))
        act = np.maximum(pre, 0.0)
        top2 = np.sort(act, axis=1)[:, -2:, :]
        gap = top2[:, 1, :] - top2[:, 0, :]
        # a pooled map whose maximum is a clipped zero has zero gradient either side
        live = top2[:, 1, :] > 0
        if live.any():
            margin = min(margin, float(gap[live].min()))
    return margin


def _rel(a: float, b: float) -> float:
    den = max(abs(a), abs(b))
    return 0.0 if den == 0.0 else abs(a - b) / den


def check_gradients(cfg: cm.ModelConfig, vocab_size: int, n_docs: int = 4, h: float = 1e-3,
                    min_margin: float = 1e-2, seed: int = 0, max_tries: int = 200) -> GradCheckResult:
    """Compare backprop gradients of the weighted loss against central differences.

    Runs in float64 with dropout disabled. Random points are redrawn until
    every ReLU input and pooled maximum sits at least ``min_margin`` from its
    kink, so a step of ``h`` never crosses one.
    """
    vocab = [f"w{i}" for i in range(vocab_size)]
    cfg = cm.deep_copy_config(cfg, dropout=0.0)
    for attempt in range(max_tries):
        s = seed + attempt
        rng = np.random.default_rng(s)
        params = cm.build_model(cm.deep_copy_config(cfg, embedding_init="random"), vocab, seed=s,
                                dtype=np.float64)
        params.embedding[...] = rng.normal(0.0, 0.5, size=params.embedding.shape)
        for W, b in params.conv.values():
            b[...] = rng.normal(0.0, 0.1, size=b.shape)
        ids = rng.integers(0, vocab_size, size=(n_docs, cfg.seq_len))
        y = rng.integers(0, cfg.num_classes, size=n_docs)
        if kink_margin(params, ids) >= min_margin:
            break
    else:
        raise RuntimeError(f"no kink-free point found in {max_tries} draws")

    def loss_at() -> float:
        return cm.loss_and_grads(params, ids, y, cfg, False, np.random.default_rng(0), trainable=set())[0]

    _, _, grads = cm.loss_and_grads(params, ids, y, cfg, False, np.random.default_rng(0))
    worst, worst_name, checked = 0.0, "", 0
    for name, a in params.arrays().items():
        g = grads[name]
        flat, gflat = a.reshape(-1), g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = loss_at()
            flat[i] = orig - h
            down = loss_at()
            flat[i] = orig
            fd = (up - down) / (2 * h)
            err = _rel(float(gflat[i]), fd)
            checked += 1
            if err > worst:
                worst, worst_name = err, f"{name}[{i}]"
    return GradCheckResult(worst, worst_name, checked, kink_margin(params, ids), s)
