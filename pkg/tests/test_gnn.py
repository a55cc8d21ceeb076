import struct

import numpy as np
import pytest

from gnn.checkpoint import (
    CorruptCheckpoint, VersionMismatch, load_checkpoint, read_model, save_checkpoint, write_model,
)
from gnn.features import EDGE_FEATURE_DIM, GraphInputs, NormStats, featurize, node_feature_dim, prepare_inputs
from gnn.layers import bn_backward, bn_forward, segment_sum
from gnn.model import (
    Hyper, PredictionModel, ShapeMismatch, backward, forward, init_params, loss, param_shapes,
)
from gnn.optim import Adam, adam_step
from graph import Edge, EdgeKind, Node, NodeKind, build_adjacency

SMALL = dict(h_conv=4, h_mlp=4, l_conv=2, l_mlp=2)


def _fitted_inputs(g):
    stats = NormStats.fit([featurize(g)])
    return stats, prepare_inputs(g, stats)


def test_feature_shapes_and_values(toy_graph):
    f = featurize(toy_graph)
    assert f.x_init.shape == (len(toy_graph.nodes), node_feature_dim(3)) == (11, 13)
    assert f.e_init.shape == (len(toy_graph.edges), EDGE_FEATURE_DIM)
    first_trip = toy_graph.nodes[toy_graph.trip_nodes[0]]
    row = f.x_init[first_trip.id]
    assert row[:4].tolist() == [0.0, 0.0, 1.0, 0.0]
    assert row[4 + first_trip.station_dep] == 1.0
    assert row[4 + 3 + first_trip.station_arr] == 1.0
    assert row[-3] == pytest.approx(300 / 1440)
    assert row[-1] == pytest.approx(30 / 480)
    deadhead = next(n for n in toy_graph.nodes if n.kind is NodeKind.DEADHEAD)
    assert f.x_init[deadhead.id, 4:10].sum() == 0.0
    conn = toy_graph.edges[toy_graph.connection_edge_ids[0]]
    gap = toy_graph.nodes[conn.head].t_dep - toy_graph.nodes[conn.tail].t_arr
    assert f.e_init[conn.id, 5] == pytest.approx(gap / 480)
    off = next(e for e in toy_graph.edges if e.kind is EdgeKind.SIGN_OFF)
    assert f.e_init[off.id, 6] == pytest.approx(1.0 / 1.5)


def test_normalization_maps_into_unit_range(small_graph, toy_graph):
    stats = NormStats.fit([featurize(small_graph)])
    x = stats.normalize(featurize(small_graph)).x_init
    assert x.min() >= 0.0 and x.max() <= 1.0
    constant = stats.x_max == stats.x_min
    assert (x[:, constant] == 0.0).all()
    again = NormStats.from_dict(stats.to_dict())
    assert np.array_equal(again.e_max, stats.e_max)


def test_fit_rejects_mixed_station_counts(small_graph, toy_graph):
    with pytest.raises(ValueError):
        NormStats.fit([featurize(small_graph), featurize(toy_graph)])
    with pytest.raises(ValueError):
        NormStats.fit([])


def test_zero_model_scores_one_half(small_graph):
    scores = PredictionModel.zero(small_graph.n_stations, **SMALL).score(small_graph)
    assert scores.p.shape == (len(small_graph.connection_edge_ids),)
    assert np.allclose(scores.p, 0.5)
    assert list(scores.edge_ids) == list(small_graph.connection_edge_ids)


def test_single_incident_edge_gets_full_gate():
    hyper = Hyper(node_dim=5, edge_dim=EDGE_FEATURE_DIM, **SMALL)
    params = init_params(hyper, seed=1)
    rng = np.random.default_rng(0)
    inputs = GraphInputs(
        xn=rng.random((2, 5)), en=rng.random((1, EDGE_FEATURE_DIM)),
        tails=np.array([0]), heads=np.array([1]),
        centers=np.array([0, 1]), half_edges=np.array([0, 0]), neighbors=np.array([1, 0]),
        connections=np.array([0]),
    )
    p, cache = forward(params, inputs, train=True)
    assert p.shape == (1,)
    for conv in cache.convs:
        assert np.allclose(conv.eta, 1.0)


def test_eval_is_deterministic_and_leaves_buffers(small_graph):
    model = PredictionModel.zero(small_graph.n_stations, **SMALL)
    model.params = init_params(model.params.hyper, seed=5)
    before = {k: v.copy() for k, v in model.params.buffers.items()}
    a = model.score(small_graph).p
    b = model.score(small_graph).p
    assert np.array_equal(a, b)
    assert all(np.array_equal(before[k], model.params.buffers[k]) for k in before)


def test_wrong_feature_width_is_rejected(toy_graph, small_graph):
    model = PredictionModel.zero(small_graph.n_stations, **SMALL)
    with pytest.raises(ShapeMismatch, match="3 stations"):
        model.score(toy_graph)
    with pytest.raises(ShapeMismatch, match="5 stations"):
        PredictionModel.zero(toy_graph.n_stations, **SMALL).score(small_graph)

    # a trained model reloaded from disk keeps the check
    params = init_params(Hyper.for_stations(small_graph.n_stations, **SMALL), seed=0)
    stats = NormStats.fit([featurize(small_graph)])
    params_back, stats_back, _ = load_checkpoint(save_checkpoint(params, stats))
    with pytest.raises(ShapeMismatch):
        PredictionModel(params_back, stats_back).score(toy_graph)


def test_loss_values():
    assert loss(np.array([0.8]), np.array([1]), 0.15) == pytest.approx(-np.log(0.8))
    assert loss(np.array([0.2]), np.array([0]), 0.15) == pytest.approx(-0.15 * np.log(0.8))
    both = loss(np.array([0.8, 0.2]), np.array([1, 0]), 0.15)
    assert both == pytest.approx(-(np.log(0.8) + 0.15 * np.log(0.8)) / 2)
    assert np.isfinite(loss(np.array([0.0, 1.0]), np.array([1, 0]), 1.0))


def test_segment_sum():
    out = segment_sum(np.array([[1.0], [2.0], [3.0]]), np.array([2, 0, 2]), 4)
    assert out[:, 0].tolist() == [2.0, 0.0, 4.0, 0.0]


def test_batch_norm_gradient():
    rng = np.random.default_rng(2)
    z = rng.normal(size=(6, 3))
    gamma, beta = rng.normal(size=3), rng.normal(size=3)
    weights = rng.normal(size=(6, 3))

    def objective(zz):
        out, _ = bn_forward(zz, gamma, beta, np.zeros(3), np.ones(3), train=True)
        return (out * weights).sum()

    _, cache = bn_forward(z, gamma, beta, np.zeros(3), np.ones(3), train=True)
    dz, _, _ = bn_backward(weights, cache)
    eps = 1e-6
    numeric = np.zeros_like(z)
    for idx in np.ndindex(*z.shape):
        bumped = z.copy()
        bumped[idx] += eps
        lower = z.copy()
        lower[idx] -= eps
        numeric[idx] = (objective(bumped) - objective(lower)) / (2 * eps)
    assert np.allclose(dz, numeric, atol=1e-6)


def test_backward_matches_finite_differences(toy_graph):
    _, inputs = _fitted_inputs(toy_graph)
    hyper = Hyper.for_stations(toy_graph.n_stations, **SMALL)
    params = init_params(hyper, seed=3)
    labels = np.random.default_rng(3).integers(0, 2, size=inputs.connections.size)
    w_neg = 0.5

    def objective():
        p, _ = forward(params, inputs, train=True)
        return loss(p, labels, w_neg)

    p, cache = forward(params, inputs, train=True)
    grads = backward(params, cache, labels, w_neg)
    assert list(grads) == [name for name, _ in param_shapes(hyper)]

    eps = 1e-5
    for name, value in params.tensors.items():
        flat = value.reshape(-1)
        numeric = np.empty(flat.size)
        for i in range(flat.size):
            saved = flat[i]
            flat[i] = saved + eps
            up = objective()
            flat[i] = saved - eps
            down = objective()
            flat[i] = saved
            numeric[i] = (up - down) / (2 * eps)
        analytic = grads[name].reshape(-1)
        # entries with a near-zero gradient are compared absolutely
        rel = np.abs(numeric - analytic) / np.maximum(np.abs(numeric) + np.abs(analytic), 1e-6)
        assert rel.max() < 1e-3, f"{name}: worst entry {int(rel.argmax())} off by {rel.max():.2e}"


def test_adam_first_step_moves_by_learning_rate():
    params = {"w": np.array([1.0, -2.0, 3.0])}
    grads = {"w": np.array([0.5, -4.0, 0.0])}
    adam = Adam(lr=0.1)
    adam.step(params, grads)
    assert np.allclose(params["w"], [0.9, -1.9, 3.0], atol=1e-6)
    assert adam.t == 1


def test_adam_descends_a_quadratic():
    params = {"w": np.array([5.0, -3.0])}
    adam = Adam()
    for _ in range(2000):
        adam_step(params, {"w": 2 * params["w"]}, adam, lr=0.05)
    assert np.abs(params["w"]).max() < 0.1


def test_adam_rejects_mismatched_gradient():
    with pytest.raises(ValueError):
        Adam().step({"w": np.zeros(3)}, {"w": np.zeros(2)})


def test_checkpoint_round_trip(tmp_path, toy_graph):
    stats, _ = _fitted_inputs(toy_graph)
    params = init_params(Hyper.for_stations(toy_graph.n_stations, **SMALL), seed=9)
    model = PredictionModel(params, stats, {"best_epoch": 4})
    path = tmp_path / "model.gcgp"
    write_model(path, model)
    loaded = read_model(path)
    assert loaded.params.hyper == params.hyper
    assert loaded.metadata == {"best_epoch": 4}
    for name, value in params.tensors.items():
        assert np.array_equal(loaded.params.tensors[name], value.astype(np.float32).astype(np.float64))
    assert np.allclose(loaded.score(toy_graph).p, model.score(toy_graph).p, atol=1e-5)


def test_checkpoint_with_bad_magic_is_corrupt(toy_graph):
    params = init_params(Hyper.for_stations(3, **SMALL))
    data = bytearray(save_checkpoint(params, NormStats.fit([featurize(toy_graph)])))
    data[:4] = b"XXXX"
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(bytes(data))


def test_checkpoint_from_another_version_is_refused(toy_graph):
    params = init_params(Hyper.for_stations(3, **SMALL))
    data = bytearray(save_checkpoint(params, NormStats.fit([featurize(toy_graph)])))
    struct.pack_into("<I", data, 4, 2)
    with pytest.raises(VersionMismatch):
        load_checkpoint(bytes(data))


def test_truncated_checkpoint_is_corrupt(toy_graph):
    params = init_params(Hyper.for_stations(3, **SMALL))
    data = save_checkpoint(params, NormStats.fit([featurize(toy_graph)]))
    with pytest.raises(CorruptCheckpoint):
        load_checkpoint(data[:-10])


def test_loss_reference_points():
    half = np.full(4, 0.5)
    assert loss(half, np.array([1, 0, 1, 0]), 1.0) == pytest.approx(np.log(2.0))
    assert loss(np.array([1.0, 0.0]), np.array([1, 0]), 0.15) <= 1e-6


def test_attention_sums_to_one_around_every_node(toy_graph):
    _, inputs = _fitted_inputs(toy_graph)
    params = init_params(Hyper.for_stations(toy_graph.n_stations, **SMALL), seed=2)
    _, cache = forward(params, inputs, train=True)
    for conv in cache.convs:
        totals = segment_sum(conv.eta, inputs.centers, inputs.n_nodes)
        touched = np.bincount(inputs.centers, minlength=inputs.n_nodes) > 0
        assert np.allclose(totals[touched], 1.0)


def test_adam_ignores_zero_gradients():
    params = {"w": np.array([1.0, 2.0])}
    Adam().step(params, {"w": np.zeros(2)})
    assert params["w"].tolist() == [1.0, 2.0]


def test_perfect_prediction_has_a_flat_gradient(toy_graph):
    _, inputs = _fitted_inputs(toy_graph)
    params = init_params(Hyper.for_stations(toy_graph.n_stations, **SMALL), seed=4)
    p, cache = forward(params, inputs, train=True)
    # saturate the output layer so every score sits at its label
    labels = (p > 0.5).astype(int)
    last = f"mlp{SMALL['l_mlp'] - 1}"
    params.tensors[f"{last}.W"] *= 1e4
    p, cache = forward(params, inputs, train=True)
    grads = backward(params, cache, labels, 0.15)
    assert loss(p, labels, 0.15) <= 1e-6
    assert np.sqrt(sum((g ** 2).sum() for g in grads.values())) < 1e-4


def test_scores_follow_a_relabeling_of_the_graph(small_graph):
    rng = np.random.default_rng(3)
    node_perm = rng.permutation(len(small_graph.nodes))
    edge_perm = rng.permutation(len(small_graph.edges))
    nodes = [None] * len(small_graph.nodes)
    for n in small_graph.nodes:
        new = int(node_perm[n.id])
        nodes[new] = Node(new, n.kind, n.station_dep, n.station_arr, n.t_dep, n.t_arr)
    edges = [None] * len(small_graph.edges)
    for e in small_graph.edges:
        new = int(edge_perm[e.id])
        edges[new] = Edge(new, e.kind, int(node_perm[e.tail]), int(node_perm[e.head]), e.time_use, e.fixed_cost)
    shuffled = build_adjacency(nodes, edges, small_graph.crew_bases, small_graph.n_stations)

    stats = NormStats.fit([featurize(small_graph)])
    model = PredictionModel(init_params(Hyper.for_stations(small_graph.n_stations, **SMALL), seed=8), stats)
    original = model.score(small_graph).as_dict()
    relabeled = model.score(shuffled).as_dict()
    for old_id, p in original.items():
        assert relabeled[int(edge_perm[old_id])] == pytest.approx(p, abs=1e-9)
