import math

import numpy as np
import pytest
import scipy.sparse as sp

from hotspot_gcn.features import NodeDataset
from hotspot_gcn.gcn import (AdamState, CacheError, GcnConfig, GcnParams, adam_step, gcn_backward,
                             gcn_forward, init_params, l2_penalty, masked_cross_entropy, predict_proba,
                             softmax, train)
from hotspot_gcn.graph import build_edges, normalize_adjacency

from conftest import random_geo_graph


def small_problem(n=12, n_feat=3, n_cls=4, hidden=(8,), seed=0):
    rng = np.random.default_rng(seed)
    g = build_edges(random_geo_graph(n, seed, spread=0.03), 3.0)
    adj = normalize_adjacency(g)
    X = rng.standard_normal((n, n_feat))
    y = rng.integers(0, n_cls, n)
    mask = rng.random(n) < 0.6
    mask[0] = True
    params = init_params([n_feat, *hidden, n_cls], rng)
    for b in params.biases:
        b[:] = rng.standard_normal(b.shape) * 0.1
    return adj, X, y, mask, params


def objective(params, adj, X, y, mask, wd):
    logits, _ = gcn_forward(params, adj, X)
    loss, _ = masked_cross_entropy(logits, y, mask)
    return loss + l2_penalty(params, wd)


def finite_difference_check(params, adj, X, y, mask, wd, h=1e-6):
    _, cache = gcn_forward(params, adj, X)
    grads = gcn_backward(params, cache, y, mask, wd)
    worst = 0.0
    for p, g in zip(params.tensors(), grads.tensors()):
        for idx in np.ndindex(p.shape):
            old = p[idx]
            p[idx] = old + h
            up = objective(params, adj, X, y, mask, wd)
            p[idx] = old - h
            down = objective(params, adj, X, y, mask, wd)
            p[idx] = old
            num = (up - down) / (2 * h)
            err = abs(num - g[idx]) / max(abs(num), abs(g[idx]), 1e-6)
            worst = max(worst, err)
    return worst


@pytest.mark.parametrize("seed", range(3))
def test_gradients_match_finite_differences(seed):
    adj, X, y, mask, params = small_problem(seed=seed)
    assert finite_difference_check(params, adj, X, y, mask, wd=5e-4) < 1e-5


def test_gradients_three_layers():
    adj, X, y, mask, params = small_problem(hidden=(6, 5), seed=4)
    assert finite_difference_check(params, adj, X, y, mask, wd=1e-2) < 1e-5


def test_backward_needs_cache():
    adj, X, y, mask, params = small_problem()
    with pytest.raises(CacheError):
        gcn_backward(params, None, y, mask)


def test_weight_decay_term_is_linear():
    adj, X, y, mask, params = small_problem()
    _, cache = gcn_forward(params, adj, X)
    g0 = gcn_backward(params, cache, y, mask, 0.0)
    g1 = gcn_backward(params, cache, y, mask, 1e-3)
    g2 = gcn_backward(params, cache, y, mask, 2e-3)
    for a, b, c in zip(g0.weights, g1.weights, g2.weights):
        np.testing.assert_allclose(c - a, 2 * (b - a), rtol=1e-9, atol=1e-15)
    for a, b in zip(g0.biases, g2.biases):
        np.testing.assert_array_equal(a, b)


def test_saturated_perfect_fit_has_tiny_gradient():
    n = 5
    y = np.array([0, 1, 2, 0, 1])
    X = np.zeros((n, 3))
    X[np.arange(n), y] = 1.0
    params = GcnParams([np.eye(3) * 60.0, np.eye(3)], [np.zeros(3), np.zeros(3)])
    logits, cache = gcn_forward(params, sp.identity(n, format="csr"), X)
    loss, _ = masked_cross_entropy(logits, y, np.ones(n, bool))
    grads = gcn_backward(params, cache, y, np.ones(n, bool), 0.0)
    assert loss < 1e-20
    assert max(np.abs(t).max() for t in grads.tensors()) < 1e-20


def test_forward_zero_weights():
    adj, X, _, _, params = small_problem()
    z = GcnParams([np.zeros_like(w) for w in params.weights], [np.zeros_like(b) for b in params.biases])
    logits, _ = gcn_forward(z, adj, X)
    assert np.all(logits == 0)


def test_identity_adjacency_is_mlp():
    rng = np.random.default_rng(2)
    n = 9
    X = rng.standard_normal((n, 3))
    params = init_params([3, 7, 4], rng)
    params.biases[0][:] = rng.standard_normal(7)
    logits, _ = gcn_forward(params, sp.identity(n, format="csr"), X)
    W0, W1 = params.weights
    mlp = np.maximum(X @ W0 + params.biases[0], 0) @ W1 + params.biases[1]
    np.testing.assert_allclose(logits, mlp, rtol=1e-12, atol=1e-12)
    single, _ = gcn_forward(params, sp.identity(1, format="csr"), X[:1])
    np.testing.assert_allclose(single, mlp[:1], rtol=1e-12)


def test_zero_dropout_training_mode_equals_eval():
    adj, X, _, _, params = small_problem()
    a, _ = gcn_forward(params, adj, X, 0.0, np.random.default_rng(0))
    b, _ = gcn_forward(params, adj, X)
    np.testing.assert_array_equal(a, b)


def test_dimension_mismatch():
    adj, X, _, _, params = small_problem()
    with pytest.raises(ValueError):
        gcn_forward(params, adj, X[:, :2])
    with pytest.raises(ValueError):
        gcn_forward(params, adj, X[:5])


def test_cross_entropy_uniform_and_limit():
    loss, probs = masked_cross_entropy(np.zeros((4, 32)), np.zeros(4, int), np.ones(4, bool))
    assert loss == pytest.approx(math.log(32), rel=1e-14)
    big = np.array([[100.0, 0.0], [0.0, 100.0]])
    loss, _ = masked_cross_entropy(big, np.array([0, 1]), np.ones(2, bool))
    assert loss < 1e-40
    with pytest.raises(ValueError):
        masked_cross_entropy(big, np.array([0, 1]), np.zeros(2, bool))


def test_softmax_rows_and_shift_invariance():
    z = np.random.default_rng(0).standard_normal((20, 6)) * 10
    p = softmax(z)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    shifted = z.copy()
    shifted[3] += 123.0
    np.testing.assert_allclose(softmax(shifted)[3], p[3], rtol=1e-12)
    np.testing.assert_array_equal(np.argmax(p, 1), np.argmax(z, 1))


def reference_adam(grad_fn, x0, lr, steps, b1=0.9, b2=0.999, eps=1e-8):
    """Scalar textbook Adam, written independently of adam_step."""
    x, m, v, traj = x0, 0.0, 0.0, []
    for t in range(1, steps + 1):
        g = grad_fn(x)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        mhat = m / (1 - b1 ** t)
        vhat = v / (1 - b2 ** t)
        x = x - lr * mhat / (math.sqrt(vhat) + eps)
        traj.append(x)
    return traj


def test_adam_matches_reference_on_quadratic():
    grad = lambda x: 2.0 * (x - 3.0)
    ref = reference_adam(grad, -1.0, 0.05, 100)
    p = np.array([-1.0])
    st = AdamState.zeros_like([p])
    for k in range(100):
        adam_step([p], [np.array([grad(p[0])])], st, 0.05)
        assert p[0] == pytest.approx(ref[k], abs=1e-10)


def test_adam_first_step_is_signed_lr():
    p = np.array([0.0, 0.0, 0.0])
    st = AdamState.zeros_like([p])
    adam_step([p], [np.array([5.0, -0.2, 1e-3])], st, 0.01)
    np.testing.assert_allclose(p, [-0.01, 0.01, -0.01], rtol=1e-4)


def test_adam_zero_gradient():
    p = np.array([1.0, 2.0])
    st = AdamState.zeros_like([p])
    adam_step([p], [np.zeros(2)], st, 0.1)
    assert p.tolist() == [1.0, 2.0] and st.t == 1


def spatial_dataset(n_side=12, seed=0):
    """Two classes split by latitude on a grid graph."""
    rng = np.random.default_rng(seed)
    r, c = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
    pts = np.column_stack([41.61 + 0.02 * r.ravel(), -87.89 + 0.02 * c.ravel()])
    adj = normalize_adjacency(build_edges(pts, 3.0))
    X = np.column_stack([r.ravel() / (n_side - 1), c.ravel() / (n_side - 1),
                         rng.standard_normal(n_side * n_side)])
    y = (r.ravel() >= n_side // 2).astype(np.int64)
    ds = NodeDataset(X, y, ["SOUTH", "NORTH"]).with_split((0.7, 0.1, 0.2), seed)
    return ds, adj


def test_train_beats_majority():
    ds, adj = spatial_dataset()
    params, hist = train(ds, adj, GcnConfig(max_epochs=200, seed=1))
    pred = np.argmax(predict_proba(params, adj, ds.features), 1)
    acc = np.mean(pred[ds.test_mask] == ds.labels[ds.test_mask])
    majority = np.bincount(ds.labels[ds.test_mask]).max() / ds.test_mask.sum()
    assert acc > majority
    assert 1 <= hist.best_epoch <= hist.stopped_epoch <= 200


def test_train_loss_decreases_with_small_steps():
    ds, adj = spatial_dataset()
    _, hist = train(ds, adj, GcnConfig(max_epochs=10, learning_rate=0.001, dropout=0.0, seed=3))
    assert all(b <= a for a, b in zip(hist.train_loss, hist.train_loss[1:]))


def test_train_is_deterministic():
    ds, adj = spatial_dataset()
    cfg = GcnConfig(max_epochs=40, seed=7)
    p1, h1 = train(ds, adj, cfg)
    p2, h2 = train(ds, adj, cfg)
    assert h1 == h2
    for a, b in zip(p1.tensors(), p2.tensors()):
        assert a.tobytes() == b.tobytes()


def test_early_stopping_contract():
    # val node labels oppose the train nodes, so val loss rises once training starts
    n = 4
    X = np.array([[1.0, 0, 0], [1.0, 0, 0], [0, 1.0, 0], [0, 1.0, 0]])
    y = np.array([0, 1, 0, 1])
    tr = np.array([True, False, True, False])
    va = ~tr
    ds = NodeDataset(X, y, ["A", "B"], tr, va, va.copy())
    params, hist = train(ds, sp.identity(n, format="csr"),
                         GcnConfig(hidden_dims=[4], dropout=0.0, patience=1, max_epochs=50, seed=0))
    assert hist.val_loss[1] > hist.val_loss[0]
    assert (hist.best_epoch, hist.stopped_epoch) == (1, 2)


def test_predict_proba_rows():
    ds, adj = spatial_dataset()
    params = init_params([3, 16, 2], np.random.default_rng(0))
    p = predict_proba(params, adj, ds.features)
    np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)
    logits, _ = gcn_forward(params, adj, ds.features)
    np.testing.assert_array_equal(np.argmax(p, 1), np.argmax(logits, 1))
    again = predict_proba(params, adj, ds.features)
    assert p.tobytes() == again.tobytes()


def test_config_validation():
    with pytest.raises(ValueError):
        GcnConfig(dropout=1.0)
    with pytest.raises(ValueError):
        GcnConfig(learning_rate=0)
    with pytest.raises(ValueError):
        GcnConfig(patience=0)
