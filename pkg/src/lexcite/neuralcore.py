"""Dense arrays with a recorded graph, reverse-mode gradients and Adam.

Only the primitives the classifier needs are provided. Shapes are explicit:
batched ops take a leading batch axis ``N`` and nothing is broadcast
implicitly. Arrays keep the dtype of their inputs (float32 for training,
float64 for gradient checking).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class GraphError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(self, data, requires_grad=False, parents=(), op=""):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad or any(p.requires_grad for p in parents)
        self._parents = parents
        self._backward = None
        self.op = op

    @property
    def shape(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self.op!r})"

    def _accumulate(self, g):
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    def zero_grad(self):
        self.grad = None

    def backward(self):
        backward(self)


def _t(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def backward(loss: Tensor) -> None:
    """Sweep gradients from a scalar ``loss`` back to every leaf with ``requires_grad``."""
    if loss.data.size != 1:
        raise GraphError(f"backward needs a scalar loss, got shape {loss.data.shape}")
    order, seen = [], set()
    stack = [(loss, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


# ------------------------------------------------------------------ primitives


def embedding_lookup(E: Tensor, ids: np.ndarray) -> Tensor:
    """Gather rows of ``E`` (V x d) for integer ``ids`` (N x L); negative ids give zero rows."""
    ids = np.asarray(ids)
    mask = ids >= 0
    safe = np.where(mask, ids, 0)
    out_data = E.data[safe] * mask[..., None].astype(E.data.dtype)
    out = Tensor(out_data, parents=(E,), op="embedding")

    def _backward(g):
        if E.requires_grad:
            gE = np.zeros_like(E.data)
            np.add.at(gE, ids[mask], g[mask])
            E._accumulate(gE)

    out._backward = _backward
    return out


def add_constant(x: Tensor, c: np.ndarray) -> Tensor:
    """``x + c`` for a constant array ``c`` of the same shape."""
    if c.shape != x.shape:
        raise GraphError(f"shape mismatch {x.shape} vs {c.shape}")
    out = Tensor(x.data + c.astype(x.data.dtype), parents=(x,), op="add_const")
    out._backward = lambda g: x._accumulate(g)
    return out


def conv1d_relu(X: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """Valid 1D convolution plus ReLU.

    X: (N, L, d), W: (F, k, d), b: (F,) -> (N, L-k+1, F) with
    ``out[n, i, f] = relu(b[f] + sum(W[f] * X[n, i:i+k]))``.
    """
    N, L, d = X.shape
    F, k, dw = W.shape
    if dw != d or b.shape != (F,):
        raise GraphError(f"conv shape mismatch: X {X.shape}, W {W.shape}, b {b.shape}")
    if L < k:
        raise GraphError(f"sequence length {L} shorter than kernel {k}")
    m = L - k + 1
    # (N, m, d, k) -> (N, m, k, d) -> (N*m, k*d)
    cols = sliding_window_view(X.data, k, axis=1).transpose(0, 1, 3, 2).reshape(N * m, k * d)
    Wm = W.data.reshape(F, k * d)
    pre = cols @ Wm.T + b.data
    act = np.maximum(pre, 0)
    out = Tensor(act.reshape(N, m, F), parents=(X, W, b), op=f"conv{k}")

    def _backward(g):
        gp = g.reshape(N * m, F) * (pre > 0)
        if W.requires_grad:
            W._accumulate((gp.T @ cols).reshape(F, k, d))
        if b.requires_grad:
            b._accumulate(gp.sum(axis=0))
        if X.requires_grad:
            gcols = (gp @ Wm).reshape(N, m, k, d)
            gX = np.zeros_like(X.data)
            for j in range(k):
                gX[:, j:j + m, :] += gcols[:, :, j, :]
            X._accumulate(gX)

    out._backward = _backward
    return out


def max_over_time(c: Tensor) -> Tensor:
    """Global max over axis 1 of (N, m, F); ties route the gradient to the first argmax."""
    N, m, F = c.shape
    if m < 1:
        raise GraphError("global max pool of an empty feature map")
    idx = np.argmax(c.data, axis=1)
    out = Tensor(np.take_along_axis(c.data, idx[:, None, :], axis=1)[:, 0, :], parents=(c,), op="maxpool")

    def _backward(g):
        gc = np.zeros_like(c.data)
        np.put_along_axis(gc, idx[:, None, :], g[:, None, :], axis=1)
        c._accumulate(gc)

    out._backward = _backward
    return out


def concat(parts, axis: int = 1) -> Tensor:
    parts = [_t(p) for p in parts]
    out = Tensor(np.concatenate([p.data for p in parts], axis=axis), parents=tuple(parts), op="concat")
    bounds = np.cumsum([0] + [p.shape[axis] for p in parts])

    def _backward(g):
        for p, lo, hi in zip(parts, bounds[:-1], bounds[1:]):
            sl = [slice(None)] * g.ndim
            sl[axis] = slice(lo, hi)
            p._accumulate(g[tuple(sl)])

    out._backward = _backward
    return out


def reshape(x: Tensor, shape) -> Tensor:
    out = Tensor(x.data.reshape(shape), parents=(x,), op="reshape")
    out._backward = lambda g: x._accumulate(g.reshape(x.shape))
    return out


def dropout_t(h: Tensor, rate: float, train: bool, rng) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0,1), got {rate}")
    if not train or rate == 0.0:
        return h
    keep = (rng.random(h.shape) >= rate).astype(h.data.dtype) / (1.0 - rate)
    out = Tensor(h.data * keep, parents=(h,), op="dropout")
    out._backward = lambda g: h._accumulate(g * keep)
    return out


def linear(h: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """(N, H) x (K, H)^T + (K,) -> (N, K)."""
    if h.data.ndim != 2 or W.shape[1] != h.shape[1] or b.shape != (W.shape[0],):
        raise GraphError(f"linear shape mismatch: h {h.shape}, W {W.shape}, b {b.shape}")
    out = Tensor(h.data @ W.data.T + b.data, parents=(h, W, b), op="linear")

    def _backward(g):
        if h.requires_grad:
            h._accumulate(g @ W.data)
        if W.requires_grad:
            W._accumulate(g.T @ h.data)
        if b.requires_grad:
            b._accumulate(g.sum(axis=0))

    out._backward = _backward
    return out


def softmax(z: Tensor) -> Tensor:
    """Row-wise softmax of (N, K) logits with max subtraction."""
    e = np.exp(z.data - z.data.max(axis=1, keepdims=True))
    p = e / e.sum(axis=1, keepdims=True)
    out = Tensor(p, parents=(z,), op="softmax")

    def _backward(g):
        z._accumulate(p * (g - (g * p).sum(axis=1, keepdims=True)))

    out._backward = _backward
    return out


LOG_CLAMP = 1e-12


def cross_entropy(p: Tensor, y, alpha=None) -> Tensor:
    """``-(1/N) sum_n alpha[y_n] log p[n, y_n]`` with probabilities clamped at 1e-12."""
    y = np.asarray(y)
    N, K = p.shape
    if y.shape != (N,):
        raise GraphError(f"labels shape {y.shape} does not match batch {N}")
    if y.size and (y.min() < 0 or y.max() >= K):
        raise GraphError(f"class index out of range [0, {K})")
    alpha = np.ones(K) if alpha is None else np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (K,) or np.any(alpha <= 0):
        raise ValueError("class weights must be a strictly positive K-vector")
    rows = np.arange(N)
    py = p.data[rows, y]
    clamped = np.maximum(py, LOG_CLAMP)
    w = alpha[y]
    loss = -(w * np.log(clamped)).sum() / N
    out = Tensor(np.asarray(loss, dtype=p.data.dtype), parents=(p,), op="xent")

    def _backward(g):
        gp = np.zeros_like(p.data)
        gp[rows, y] = np.where(py > LOG_CLAMP, -w / (N * clamped), 0.0) * g
        p._accumulate(gp)

    out._backward = _backward
    return out


# ------------------------------------------------- single-instance conveniences


def conv1d_valid(X, W, b):
    """ReLU feature map of one filter: X (L, d), W (k, d), scalar b -> (L-k+1,)."""
    X, W = np.asarray(X), np.asarray(W)
    out = conv1d_relu(Tensor(X[None]), Tensor(W[None]), Tensor(np.asarray([b], dtype=W.dtype)))
    return out.data[0, :, 0]


def global_max_pool(c):
    c = np.asarray(c)
    if c.size == 0:
        raise GraphError("global max pool of an empty vector")
    return max_over_time(Tensor(c[None, :, None])).data[0, 0]


def linear_softmax(h, W_c, b_c):
    h, W_c, b_c = np.asarray(h), np.asarray(W_c), np.asarray(b_c)
    return softmax(linear(Tensor(h[None]), Tensor(W_c), Tensor(b_c))).data[0]


def weighted_cross_entropy(probs, y, alpha=None) -> float:
    return float(cross_entropy(Tensor(np.asarray(probs)), y, alpha).data)


def dropout(v, rate: float, mode: str, rng=None):
    if mode not in ("train", "infer"):
        raise ValueError(f"mode must be 'train' or 'infer', got {mode!r}")
    v = np.asarray(v)
    rng = rng if rng is not None else np.random.default_rng()
    return dropout_t(Tensor(v[None]), rate, mode == "train", rng).data[0]


# ------------------------------------------------------------------- optimizer


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Bias-corrected Adam update applied in place to ``params``.

    Parameters without an entry in ``grads`` (or with ``None``) are left alone.
    """
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if g.shape != p.shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {name!r}")
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p -= (state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(p.dtype)
