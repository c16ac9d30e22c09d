import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from lexcite import neuralcore as nc

X_EX = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, 2.0]])


def test_conv_example():
    np.testing.assert_array_equal(nc.conv1d_valid(X_EX, np.ones((2, 2)), 0.0), [2.0, 5.0])
    np.testing.assert_array_equal(nc.conv1d_valid(X_EX, np.ones((2, 2)), -10.0), [0.0, 0.0])
    np.testing.assert_array_equal(nc.conv1d_valid(X_EX, np.zeros((2, 2)), 0.0), [0.0, 0.0])


def test_conv_translation_consistency():
    rng = np.random.default_rng(0)
    W = rng.normal(size=(3, 4))
    pattern = rng.normal(size=(3, 4))
    X = np.zeros((12, 4))
    X[2:5] = pattern
    Y = np.zeros((12, 4))
    Y[6:9] = pattern
    a, b = nc.conv1d_valid(X, W, 0.1), nc.conv1d_valid(Y, W, 0.1)
    assert a[2] == pytest.approx(b[6])


def test_global_max_pool_and_tie_routing():
    assert nc.global_max_pool([2.0, 5.0]) == 5.0
    assert nc.global_max_pool([0.0, 0.0, 0.0]) == 0.0
    c = nc.Tensor(np.array([[[3.0], [3.0]]]), requires_grad=True)
    out = nc.max_over_time(c)
    nc.backward(nc.reshape(out, ()))
    np.testing.assert_array_equal(c.grad[0, :, 0], [1.0, 0.0])


def test_softmax_examples():
    p = nc.linear_softmax(np.array([1.0]), np.zeros((5, 1)), np.zeros(5))
    np.testing.assert_allclose(p, 0.2)
    p = nc.linear_softmax(np.array([1.0]), np.array([[math.log(2)], [0.0]]), np.zeros(2))
    np.testing.assert_allclose(p, [2 / 3, 1 / 3], rtol=1e-12)
    p = nc.linear_softmax(np.array([1.0]), np.array([[1000.0], [0.0]]), np.zeros(2))
    assert np.all(np.isfinite(p)) and p[0] == pytest.approx(1.0) and p[1] < 1e-300 + 1e-12


@settings(max_examples=200, deadline=None)
@given(hnp.arrays(np.float64, (3, 6), elements=st.floats(-1e4, 1e4)))
def test_softmax_normalizes_for_large_logits(z):
    p = nc.softmax(nc.Tensor(z)).data
    assert np.all(p >= 0) and np.all(np.isfinite(p))
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)


def test_cross_entropy_examples():
    assert nc.weighted_cross_entropy(np.eye(3), [0, 1, 2]) == pytest.approx(0.0)
    assert nc.weighted_cross_entropy(np.full((4, 5), 0.2), [0, 1, 2, 3]) == pytest.approx(math.log(5), abs=1e-12)


def test_cross_entropy_linear_in_alpha():
    rng = np.random.default_rng(1)
    p = rng.dirichlet(np.ones(3), size=6)
    y = np.array([0, 1, 2, 0, 1, 2])
    base = np.ones(3)
    doubled = np.array([1.0, 2.0, 1.0])
    per = -np.log(p[np.arange(6), y])
    l1 = nc.weighted_cross_entropy(p, y, base)
    l2 = nc.weighted_cross_entropy(p, y, doubled)
    assert l2 - l1 == pytest.approx(per[y == 1].sum() / 6)


def test_cross_entropy_clamps_zero_probability():
    loss = nc.weighted_cross_entropy(np.array([[0.0, 1.0]]), [0])
    assert loss == pytest.approx(-math.log(nc.LOG_CLAMP))


def test_dropout_identities():
    v = np.arange(5.0)
    np.testing.assert_array_equal(nc.dropout(v, 0.4, "infer"), v)
    np.testing.assert_array_equal(nc.dropout(v, 0.0, "train", np.random.default_rng(0)), v)
    with pytest.raises(ValueError):
        nc.dropout(v, 0.4, "eval")


def test_dropout_preserves_mean_in_expectation():
    rng = np.random.default_rng(0)
    v = np.full(100_000, 3.0)
    out = nc.dropout(v, 0.4, "train", rng)
    # each entry is 0 or v/0.6; the sample mean has std 3*sqrt(0.4/0.6)/sqrt(1e5) ~ 0.0078
    assert out.mean() == pytest.approx(3.0, abs=0.04)
    assert set(np.unique(out)) <= {0.0, 5.0}


def test_linear_gradient_is_transpose_product():
    rng = np.random.default_rng(2)
    h = nc.Tensor(rng.normal(size=(4, 3)), requires_grad=True)
    W = nc.Tensor(rng.normal(size=(2, 3)), requires_grad=True)
    b = nc.Tensor(np.zeros(2), requires_grad=True)
    G = rng.normal(size=(4, 2))
    out = nc.linear(h, W, b)
    # contract with a constant to get a scalar whose output gradient is G
    loss = nc.reshape(nc.linear(nc.reshape(out, (1, 8)), nc.Tensor(G.reshape(1, 8)), nc.Tensor(np.zeros(1))), ())
    nc.backward(loss)
    np.testing.assert_allclose(h.grad, G @ W.data, rtol=1e-15)
    np.testing.assert_allclose(W.grad, G.T @ h.data, rtol=1e-15)
    np.testing.assert_allclose(b.grad, G.sum(axis=0), rtol=1e-15)


def test_disconnected_parameter_has_zero_gradient():
    a = nc.Tensor(np.ones((1, 2)), requires_grad=True)
    unused = nc.Tensor(np.ones((2, 2)), requires_grad=True)
    loss = nc.reshape(nc.linear(a, nc.Tensor(np.ones((1, 2))), nc.Tensor(np.zeros(1))), ())
    nc.backward(loss)
    assert unused.grad is None or np.all(unused.grad == 0)


def test_backward_requires_scalar():
    with pytest.raises(nc.GraphError):
        nc.backward(nc.Tensor(np.ones(3), requires_grad=True))


def _fd(f, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        o = x[i]
        x[i] = o + h
        up = f()
        x[i] = o - h
        down = f()
        x[i] = o
        g[i] = (up - down) / (2 * h)
    return g


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_conv_pool_softmax_ce_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(2, 6, 3))
    W = rng.normal(size=(4, 2, 3))
    b = rng.normal(size=4) * 0.1
    Wc = rng.normal(size=(3, 4))
    bc = rng.normal(size=3)
    y = np.array([0, 2])
    alpha = np.array([1.0, 0.5, 2.0])

    def build():
        ts = [nc.Tensor(a, requires_grad=True) for a in (X, W, b, Wc, bc)]
        h = nc.max_over_time(nc.conv1d_relu(ts[0], ts[1], ts[2]))
        loss = nc.cross_entropy(nc.softmax(nc.linear(h, ts[3], ts[4])), y, alpha)
        return ts, loss

    ts, loss = build()
    nc.backward(loss)
    for t, arr in zip(ts, (X, W, b, Wc, bc)):
        np.testing.assert_allclose(t.grad, _fd(lambda: float(build()[1].data), arr), rtol=1e-5, atol=1e-7)


def test_embedding_lookup_accumulates_repeated_rows_and_zeroes_padding():
    E = nc.Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    ids = np.array([[1, 1, -1]])
    out = nc.embedding_lookup(E, ids)
    np.testing.assert_array_equal(out.data[0, 2], [0.0, 0.0])
    nc.backward(nc.reshape(nc.linear(nc.reshape(out, (1, 6)), nc.Tensor(np.ones((1, 6))),
                                     nc.Tensor(np.zeros(1))), ()))
    np.testing.assert_array_equal(E.grad, [[0, 0], [2, 2], [0, 0]])


def test_adam_first_step():
    p = {"w": np.array([0.5])}
    state = nc.AdamState(lr=1e-3)
    nc.adam_step(p, {"w": np.array([1.0])}, state)
    assert p["w"][0] == pytest.approx(0.5 - 1e-3 / (1 + 1e-8), abs=1e-15)


def test_adam_zero_gradient_and_determinism():
    p = {"w": np.array([0.5, -1.0])}
    nc.adam_step(p, {"w": np.zeros(2)}, nc.AdamState())
    np.testing.assert_array_equal(p["w"], [0.5, -1.0])
    rng = np.random.default_rng(0)
    grads = [rng.normal(size=3) for _ in range(10)]
    a, b = {"w": np.ones(3)}, {"w": np.ones(3)}
    sa, sb = nc.AdamState(), nc.AdamState()
    for g in grads:
        nc.adam_step(a, {"w": g}, sa)
        nc.adam_step(b, {"w": g.copy()}, sb)
    np.testing.assert_array_equal(a["w"], b["w"])


def test_adam_rejects_shape_mismatch():
    with pytest.raises(ValueError):
        nc.adam_step({"w": np.ones(2)}, {"w": np.ones(3)}, nc.AdamState())
