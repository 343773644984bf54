import numpy as np
import pytest

from napgcl import autodiff as ad
from napgcl.augment import AugmentConfig, make_views
from napgcl.autodiff import Tensor
from napgcl.graph import make_graph, normalized_adjacency
from napgcl.nn import (AdamConfig, Checkpoint, EncoderConfig, EncoderParams, MissingGrad,
                       OptimizerState, gcn_forward, gcn_propagate, optimizer_step, project)
from napgcl.objective import LossConfig, contrastive_loss, nap_mask

from conftest import random_graph
from gradcheck import check_param_grads


def test_single_node_identity_layer():
    g = make_graph([[1.5, -2.0]], [], [0], [0])
    params = EncoderParams([Tensor(np.eye(2), True)])
    view = make_views(g, AugmentConfig(), AugmentConfig(), 0)[0]
    np.testing.assert_array_equal(gcn_forward(view, params).value, [[1.5, -2.0]])


def test_zero_features_give_zero_embeddings(rng):
    g = random_graph(rng, 6).with_features(np.zeros((6, 3)))
    params = EncoderParams.init(3, EncoderConfig(embed_dim=4), seed=0)
    out = gcn_propagate(normalized_adjacency(g), g.features, params)
    assert np.all(out.value == 0)


def dense_gcn(a_hat, x, weights):
    h = x
    for k, w in enumerate(weights):
        h = a_hat @ h @ w
        if k < len(weights) - 1:
            h = np.maximum(h, 0)
    return h


def test_gcn_matches_dense_reimplementation(rng):
    g = random_graph(rng, 8, num_features=5, edge_prob=0.4)
    params = EncoderParams.init(5, EncoderConfig(embed_dim=3, hidden_dim=6), seed=1)
    a = np.zeros((8, 8))
    for u, v in g.edges:
        a[u, v] = a[v, u] = 1
    a += np.eye(8)
    d = np.diag(1 / np.sqrt(a.sum(1)))
    expected = dense_gcn(d @ a @ d, g.features, [w.value for w in params.weights])
    got = gcn_propagate(normalized_adjacency(g), g.features, params).value
    np.testing.assert_allclose(got, expected, rtol=0, atol=1e-12)


def test_final_layer_is_linear(rng):
    g = random_graph(rng, 10, num_features=4)
    params = EncoderParams.init(4, EncoderConfig(embed_dim=8), seed=3)
    out = gcn_propagate(normalized_adjacency(g), g.features, params).value
    assert np.any(out < 0)


def test_encoder_width_mismatch(rng):
    g = random_graph(rng, 4, num_features=3)
    params = EncoderParams.init(5, EncoderConfig(), seed=0)
    with pytest.raises(ad.ShapeMismatch):
        gcn_propagate(normalized_adjacency(g), g.features, params)


def test_encoder_widths():
    params = EncoderParams.init(7, EncoderConfig(embed_dim=4, num_layers=3), seed=0)
    assert [w.shape for w in params.weights] == [(7, 8), (8, 8), (8, 4)]


def test_init_is_seeded():
    a = EncoderParams.init(5, EncoderConfig(), seed=9)
    b = EncoderParams.init(5, EncoderConfig(), seed=9)
    assert all(np.array_equal(x.value, y.value) for x, y in zip(a.tensors, b.tensors))


def test_full_pipeline_gradients():
    """augment -> GCN -> promoted-positive loss on a 6-node, 2-domain graph."""
    rng = np.random.default_rng(11)
    g = random_graph(rng, 6, num_domains=2, num_features=3, edge_prob=0.6)
    params = EncoderParams.init(3, EncoderConfig(embed_dim=3, hidden_dim=4), seed=2)
    va, vb = make_views(g, AugmentConfig(0.2, 0.3), AugmentConfig(0.3, 0.2), seed=4)
    cfg = LossConfig(tau=0.5, nap_ratio=0.2)
    mask, _ = nap_mask(gcn_forward(va, params).value, gcn_forward(vb, params).value,
                       g.domains, cfg.nap_ratio)
    assert len(mask) > 0
    errors = check_param_grads(
        lambda: contrastive_loss(gcn_forward(va, params), gcn_forward(vb, params), mask, cfg,
                                 g.domains), params.tensors)
    assert max(errors) < 1e-5


def test_projection_head_gradients():
    rng = np.random.default_rng(1)
    g = random_graph(rng, 6, num_features=3, edge_prob=0.5)
    params = EncoderParams.init(3, EncoderConfig(embed_dim=3, projection_head=True), seed=0)
    va, vb = make_views(g, AugmentConfig(0.2, 0.3), AugmentConfig(0.3, 0.2), seed=1)
    # every row of the projected output must be live, otherwise all gradients vanish
    assert (np.abs(project(gcn_forward(va, params), params).value).sum(axis=1) > 0).all()
    cfg = LossConfig()
    errors = check_param_grads(
        lambda: contrastive_loss(project(gcn_forward(va, params), params),
                                 project(gcn_forward(vb, params), params), None, cfg),
        params.tensors)
    assert len(errors) == 4 and max(errors) < 1e-5


def test_adam_zero_grad_is_noop():
    params = EncoderParams([Tensor(np.array([[1.0, -2.0]]), True)])
    state = OptimizerState.init(params, AdamConfig())
    params.weights[0].grad = np.zeros((1, 2))
    optimizer_step(params, state)
    assert params.weights[0].value.tolist() == [[1.0, -2.0]]


def test_adam_first_step_moves_by_lr():
    params = EncoderParams([Tensor([[0.5]], True)])
    state = OptimizerState.init(params, AdamConfig(lr=0.1))
    params.weights[0].grad = np.ones((1, 1))
    optimizer_step(params, state)
    assert params.weights[0].value[0, 0] == pytest.approx(0.4, abs=1e-6)
    assert params.weights[0].grad is None and state.step == 1


def test_adam_converges_on_quadratic_bowl():
    w0 = np.random.default_rng(0).standard_normal((1, 5))
    w = Tensor(w0 / np.linalg.norm(w0), True)
    params = EncoderParams([w])
    state = OptimizerState.init(params, AdamConfig(lr=0.05))
    for _ in range(200):
        ad.backward(ad.sum(w * w))
        optimizer_step(params, state)
    assert np.linalg.norm(w.value) < 1e-2


def test_missing_grad():
    params = EncoderParams([Tensor([[1.0]], True)])
    with pytest.raises(MissingGrad):
        optimizer_step(params, OptimizerState.init(params, AdamConfig()))


def test_checkpoint_round_trip(tmp_path):
    params = EncoderParams.init(4, EncoderConfig(embed_dim=2, projection_head=True), seed=0)
    state = OptimizerState.init(params, AdamConfig(lr=0.003))
    for t in params.tensors:
        t.grad = np.ones_like(t.value)
    optimizer_step(params, state)
    ck = Checkpoint.capture(params, state, 7, '{"a":1}', [[0, 3], [2, 1]], 0.75)
    ck.save(tmp_path / "c.npz")
    back = Checkpoint.load(tmp_path / "c.npz")
    assert back.epoch == 7 and back.val_acc == 0.75 and back.config == {"a": 1}
    assert back.mask.tolist() == [[0, 3], [2, 1]]
    assert back.optimizer.step == 1 and back.optimizer.config == state.config
    for a, b in zip(params.tensors, back.params.tensors):
        assert a.value.tobytes() == b.value.tobytes()
    for a, b in zip(state.m + state.v, back.optimizer.m + back.optimizer.v):
        assert a.tobytes() == b.tobytes()


def test_checkpoint_detects_tampered_config(tmp_path):
    params = EncoderParams.init(2, EncoderConfig(embed_dim=2), seed=0)
    ck = Checkpoint.capture(params, OptimizerState.init(params, AdamConfig()), 0, "{}")
    ck.save(tmp_path / "c.npz")
    with np.load(tmp_path / "c.npz") as z:
        arrays = dict(z)
    arrays["config_json"] = np.array('{"x":2}')
    np.savez(tmp_path / "bad.npz", **arrays)
    with pytest.raises(ValueError, match="hash"):
        Checkpoint.load(tmp_path / "bad.npz")
