import numpy as np
import pytest

from roadgraph.autodiff import Tape, Tensor
from roadgraph.dualgraph import build_dense, prune_candidates
from roadgraph.network import (
    ModelConfig,
    ModelParameters,
    forward,
    graph_arrays,
    gru_step,
    init_parameters,
    masked_probabilities,
    pool_messages,
    predict,
    parameter_shapes,
)
from roadgraph.priors import uniform_priors
from roadgraph.scene import ObjectNode, SceneGraph
from roadgraph.taxonomy import ObjectClass, type_index, valid_relationships

V, H = ObjectClass.VEHICLE, ObjectClass.HUMAN
PT = uniform_priors()


def frame_with(n, seed=0):
    rng = np.random.default_rng(seed)
    classes = [ObjectClass.VEHICLE, ObjectClass.HUMAN,
               ObjectClass.OBSTACLE, ObjectClass.TRAFFIC_SIGN]
    nodes = [
        ObjectNode(i, classes[i % 4],
                   float(rng.uniform(-30, 30)), float(rng.uniform(-5, 6)),
                   vx=float(rng.uniform(-10, 10)), vy=float(rng.uniform(-2, 2)),
                   ax=float(rng.uniform(-2, 2)), yaw=float(rng.uniform(-3, 3)))
        for i in range(n)
    ]
    return SceneGraph(0, 0.0, nodes, [])


def zeroed(cfg):
    params = init_parameters(cfg)
    for _, t in params.items():
        t.data[:] = 0.0
    return params


def test_init_is_deterministic_given_seed():
    cfg = ModelConfig(hidden_dim=16, seed=42)
    a, b = init_parameters(cfg), init_parameters(cfg)
    for (name, ta), (_, tb) in zip(a.items(), b.items()):
        assert np.array_equal(ta.data, tb.data), name
    c = init_parameters(ModelConfig(hidden_dim=16, seed=43))
    assert not np.array_equal(a["W_xr"].data, c["W_xr"].data)


def test_zero_init_scale_gives_zero_weights():
    params = init_parameters(ModelConfig(hidden_dim=8, init_scale=0.0))
    assert all(np.all(t.data == 0.0) for _, t in params.items())


def test_parameter_shapes_contract():
    shapes = parameter_shapes(ModelConfig(hidden_dim=64))
    assert shapes["W_xr"] == (64, 64)
    assert shapes["W_l"] == (22, 64)
    assert shapes["W_v"] == (64, 13)
    assert shapes["W_e"] == (64, 26)
    assert shapes["w_g"] == (3, 192)


def test_gru_with_zero_parameters_halves_previous_state():
    cfg = ModelConfig(hidden_dim=4)
    params = zeroed(cfg)
    h_prev = Tensor(np.array([[1.0, -2.0, 0.5, 3.0]]))
    f_t = Tensor(np.ones((1, 4)))
    with Tape():
        out = gru_step(f_t, h_prev, params)
    np.testing.assert_allclose(out.data, h_prev.data * 0.5)


def test_gru_scalar_hand_value():
    cfg = ModelConfig(hidden_dim=4)
    params = zeroed(cfg)
    for name in ("W_xr", "W_hr", "W_xz", "W_hz", "W_xh", "W_hh"):
        params[name].data[:] = np.eye(4)
    f_t = Tensor(np.array([[1.0, 0, 0, 0]]))
    h_prev = Tensor(np.zeros((1, 4)))
    with Tape():
        out = gru_step(f_t, h_prev, params)
    # r = z = sigmoid(1), candidate = tanh(1), h = (1-z)*candidate
    sig, th = 1 / (1 + np.exp(-1)), np.tanh(1.0)
    assert out.data[0, 0] == pytest.approx((1 - sig) * th, abs=1e-12)
    assert out.data[0, 0] == pytest.approx(0.2048, abs=2e-4)


def test_gru_zero_input_zero_state_is_fixed_point():
    cfg = ModelConfig(hidden_dim=4, seed=9)
    params = init_parameters(cfg)
    with Tape():
        out = gru_step(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 4))), params)
    np.testing.assert_allclose(out.data, 0.0)


def test_uniform_gate_pools_the_mean_of_messages():
    cfg = ModelConfig(hidden_dim=4)
    params = zeroed(cfg)
    for name in ("W_p1", "W_p2", "W_p3"):
        params[name].data[:] = np.eye(4)
    dual = build_dense(frame_with(3), PT)
    arrays = graph_arrays(dual)
    rng = np.random.default_rng(1)
    phi = Tensor(rng.normal(size=(3, 4)))
    hidden = Tensor(rng.normal(size=(3, 4)))
    with Tape():
        pooled = pool_messages(phi, hidden, arrays, params)
    m1 = arrays.sel_subject @ phi.data
    m2 = arrays.sel_object @ phi.data
    m3 = arrays.adjacency_mean @ hidden.data
    np.testing.assert_allclose(pooled.data, (m1 + m2 + m3) / 3.0, atol=1e-12)


def test_isolated_pair_pools_zero_neighbour_message():
    dual = build_dense(frame_with(2), PT)
    arrays = graph_arrays(dual)
    assert np.all(arrays.adjacency_mean == 0.0)
    cfg = ModelConfig(hidden_dim=8, seed=2)
    logits = forward(dual, init_parameters(cfg), cfg)
    assert logits.shape == (1, 22)
    assert np.all(np.isfinite(logits))


def test_two_node_single_layer_logit_shape():
    cfg = ModelConfig(hidden_dim=8, num_layers=1, seed=0)
    dual = build_dense(frame_with(2), PT)
    assert forward(dual, init_parameters(cfg), cfg).shape == (1, 22)


def test_empty_graph_gives_empty_logits():
    cfg = ModelConfig(hidden_dim=8)
    dual = build_dense(frame_with(1), PT)
    assert forward(dual, init_parameters(cfg), cfg).shape == (0, 22)


def test_zero_parameters_give_uniform_probabilities():
    cfg = ModelConfig(hidden_dim=8)
    dual = build_dense(frame_with(4), PT)
    logits = forward(dual, zeroed(cfg), cfg)
    assert np.all(logits == 0.0)
    probs = np.exp(logits) / np.exp(logits).sum(axis=1, keepdims=True)
    np.testing.assert_allclose(probs, 1.0 / 22)


def test_permuting_node_input_order_leaves_logits_unchanged():
    cfg = ModelConfig(hidden_dim=16, num_layers=3, seed=5)
    params = init_parameters(cfg)
    g = frame_with(5, seed=8)
    shuffled = SceneGraph(g.frame_index, g.timestamp_s,
                          list(reversed(g.nodes)), [])
    base = forward(build_dense(g, PT), params, cfg)
    other = forward(build_dense(shuffled, PT), params, cfg)
    np.testing.assert_allclose(base, other, atol=1e-12)


def test_masked_probability_of_invalid_classes_is_negligible():
    cfg = ModelConfig(hidden_dim=16, num_layers=2, seed=11)
    params = init_parameters(cfg)
    rng = np.random.default_rng(3)
    for trial in range(20):
        dual = build_dense(frame_with(int(rng.integers(2, 7)), seed=trial), PT)
        arrays = graph_arrays(dual)
        logits = forward(dual, params, cfg)
        probs = masked_probabilities(logits, arrays.mask_bias)
        np.testing.assert_allclose(probs.sum(axis=1), 1.0, atol=1e-9)
        classes = {n.id: n.obj_class for n in dual.object_nodes}
        for k, (i, j) in enumerate(arrays.pairs):
            valid = {type_index(r)
                     for r in valid_relationships(classes[i], classes[j])}
            invalid_mass = sum(probs[k, c] for c in range(22) if c not in valid)
            assert invalid_mass < 1e-6


def test_predict_on_single_node_scene_is_empty():
    cfg = ModelConfig(hidden_dim=8, seed=0)
    out = predict(frame_with(1), PT, init_parameters(cfg), cfg)
    assert out.edges == []


def test_predict_edges_are_ranked_valid_and_thresholdable():
    cfg = ModelConfig(hidden_dim=16, seed=1)
    params = init_parameters(cfg)
    g = frame_with(6, seed=4)
    out = predict(g, PT, params, cfg)
    confidences = [e.confidence for e in out.edges]
    assert confidences == sorted(confidences, reverse=True)
    classes = {n.id: n.obj_class for n in out.nodes}
    from roadgraph.taxonomy import orientation_valid
    for e in out.edges:
        assert orientation_valid(classes[e.subject_id], classes[e.object_id], e.rel)
    cut = predict(g, PT, params, cfg, threshold=0.5)
    assert all(e.confidence >= 0.5 for e in cut.edges)
