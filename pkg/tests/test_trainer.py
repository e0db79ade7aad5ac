import json

import numpy as np
import pytest
from conftest import blobs

from gdfc.baselines import corner_centroids
from gdfc.data import Dataset
from gdfc.network import DivergenceError, Network, centroid_loss, forward, init_network, transform
from gdfc.partition import CentroidSet, ColorationError, nearest_noself, nearest_self
from gdfc.persist import model_from_dict, model_to_dict
from gdfc.trainer import (
    GdfcModel,
    TrainConfig,
    _check_collapse,
    predict,
    predict_batch,
    recluster,
    shuffle_order,
    train,
    train_epoch,
)


def mse_oracle_step(W1, b1, W2, b2, x, t, eta, lam):
    """Classic one-hidden-layer squared-error backprop with L2 decay, written out longhand."""
    sig = lambda z: 1.0 / (1.0 + np.exp(-z))
    a = sig(W1 @ x + b1)
    out = sig(W2 @ a + b2)
    d2 = (t - out) * out * (1 - out)
    d1 = a * (1 - a) * (W2.T @ d2)
    W2n = W2 + eta * (np.outer(d2, a) - lam * W2)
    W1n = W1 + eta * (np.outer(d1, x) - lam * W1)
    return W1n, b1 + eta * d1, W2n, b2 + eta * d2


def _reduction_case(seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(size=(10, 3))
    y = np.array([0, 1] * 5)
    net = init_network([3, 4, 2], seed=seed)
    return Dataset(X, y), net


@pytest.mark.parametrize("engine", ["reference", "compiled"])
def test_reduction_to_mse_backprop(engine):
    data, net = _reduction_case()
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=2, xi=0.0, lam=1e-3, eta=0.3, seed=5)
    out, _ = train_epoch(net, data, corner_centroids(2), cfg, epoch=0, engine=engine)
    W1, b1, W2, b2 = (p.copy() for p in (net.weights[0], net.biases[0], net.weights[1], net.biases[1]))
    for j in shuffle_order(len(data), cfg, 0):
        W1, b1, W2, b2 = mse_oracle_step(W1, b1, W2, b2, data.features[j], np.eye(2)[data.labels[j]], 0.3, 1e-3)
    for got, want in zip([*out.weights, *out.biases], [W1, W2, b1, b2]):
        assert np.max(np.abs(got - want)) <= 1e-12


def test_engines_agree():
    data = blobs(n_per=15, seed=2)
    cfg = TrainConfig(hidden_sizes=(5,), partition_dim=3, num_centroids=4, xi=0.5, lam=1e-4, eta=0.5, seed=1)
    net = init_network([2, 5, 3], seed=1)
    cset = recluster(net, data, cfg, 0)
    a, la = train_epoch(net, data, cset, cfg, engine="reference")
    b, lb = train_epoch(net, data, cset, cfg, engine="compiled")
    assert abs(la - lb) <= 1e-12
    for wa, wb in zip(a.weights + a.biases, b.weights + b.biases):
        assert np.max(np.abs(wa - wb)) <= 1e-12


def test_zero_eta_leaves_network_and_reports_eval_loss(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=2, eta=0.0, lam=1e-3)
    net = init_network([2, 4, 2], seed=0)
    cset = recluster(net, toy_blobs, cfg, 0)
    for engine in ("reference", "compiled"):
        out, loss = train_epoch(net, toy_blobs, cset, cfg, engine=engine)
        assert out.equals(net)
        expected = np.mean([
            centroid_loss(forward(net, x).output, nearest_self(forward(net, x).output, cset, int(c)),
                          nearest_noself(forward(net, x).output, cset, int(c)), cfg.xi, cfg.lam, net)
            for x, c in zip(toy_blobs.features, toy_blobs.labels)])
        assert loss == pytest.approx(expected, rel=1e-12)


def test_train_epoch_requires_colored_set(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=2)
    bare = CentroidSet(np.zeros((2, 2)), [-1, -1], [0, 0], 2)
    with pytest.raises(ColorationError):
        train_epoch(init_network([2, 4, 2]), toy_blobs, bare, cfg)


def test_loss_decreases_on_separable_toy(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(6,), partition_dim=2, num_centroids=2, epochs=50, eta=0.5, seed=0)
    model = train(toy_blobs, cfg)
    assert model.training_loss_curve[-1] < model.training_loss_curve[0]


def test_small_eta_loss_descent_smoke(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(6,), partition_dim=2, num_centroids=2, epochs=50, eta=1e-2, lam=0.0, seed=0)
    curve = train(toy_blobs, cfg).training_loss_curve
    assert curve[49] < curve[0]


def test_single_sample_converges_to_self_centroid():
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=2, xi=0.0, lam=0.0, eta=1.0)
    # a lone centroid has no non-self partner, so add a far decoy of another class
    cset = CentroidSet(np.array([[0.2, 0.8], [0.9, 0.1]]), [0, 1], [1, 0], 2)
    data = Dataset(np.array([[0.3, 0.7]]), np.array([0]), n_classes=2)
    net = init_network([2, 4, 2], seed=3)
    for epoch in range(400):
        net, _ = train_epoch(net, data, cset, cfg, epoch)
    assert np.linalg.norm(transform(net, data.features)[0] - cset.positions[0]) < 0.05


def test_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(epochs=0)
    with pytest.raises(ValueError):
        TrainConfig(partition_dim=0)
    with pytest.raises(ValueError):
        TrainConfig(recluster_every=0)
    with pytest.raises(ValueError):
        TrainConfig(hidden_sizes=())
    cfg = TrainConfig(hidden_sizes=[3, 4])
    assert TrainConfig.from_dict(cfg.to_dict()) == cfg


def test_train_precondition_errors(toy_blobs):
    with pytest.raises(ValueError):
        train(toy_blobs, TrainConfig(num_centroids=1, partition_dim=2))
    with pytest.raises(ValueError):
        train(toy_blobs, TrainConfig(num_centroids=50, partition_dim=2))
    with pytest.raises(ValueError):
        train(toy_blobs, TrainConfig(num_centroids=2, partition_dim=2, eta=0.0))


def test_train_is_deterministic(three_blobs):
    cfg = TrainConfig(hidden_sizes=(8,), partition_dim=4, num_centroids=5, epochs=15, seed=9)
    a, b = train(three_blobs, cfg), train(three_blobs, cfg)
    assert a.network.equals(b.network)
    assert np.array_equal(a.centroids.positions, b.centroids.positions)
    assert np.array_equal(a.centroids.colors, b.centroids.colors)
    assert a.training_loss_curve == b.training_loss_curve
    c = train(three_blobs, cfg.replace(seed=10))
    assert not a.network.equals(c.network)


def test_wine_like_toy_training_accuracy(three_blobs):
    cfg = TrainConfig(hidden_sizes=(10,), partition_dim=6, num_centroids=6, epochs=100, seed=0)
    model = train(three_blobs, cfg)
    assert np.mean(model.predict(three_blobs.features) == three_blobs.labels) >= 0.95
    assert model.centroids.dimension == model.network.output_dim
    assert model.centroids.owned_classes() == {0, 1, 2}


def test_recluster_every_other_epoch(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=3, epochs=6, recluster_every=3)
    model = train(toy_blobs, cfg)
    assert len(model.training_loss_curve) == 6


def test_keep_best_picks_lowest_loss_network(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=3, epochs=20, eta=2.0, keep_best=True)
    best = train(toy_blobs, cfg)
    k = int(np.argmin(best.training_loss_curve))
    # epochs are deterministic by index, so the plain run stopped after epoch k is the same network
    plain = train(toy_blobs, cfg.replace(keep_best=False, epochs=k + 1))
    assert best.network.equals(plain.network)


# ---- predict


def _two_centroid_model():
    net = Network([2, 2, 2], [np.eye(2) * 4, np.eye(2) * 4], [np.zeros(2), np.full(2, -2.0)])
    cset = CentroidSet(np.array([[0.1, 0.1], [0.9, 0.9]]), [0, 1], [1, 1], 2)
    return GdfcModel(net, cset, TrainConfig(partition_dim=2, num_centroids=2))


def test_predict_forced_geometry():
    model = _two_centroid_model()
    near0 = transform(model.network, [[-3.0, -3.0]])[0]
    assert np.linalg.norm(near0 - [0.1, 0.1]) < np.linalg.norm(near0 - [0.9, 0.9])
    assert predict(model, [-3.0, -3.0]) == 0
    assert predict(model, [3.0, 3.0]) == 1


def test_predict_sample_mapped_onto_centroid(three_blobs):
    model = train(three_blobs, TrainConfig(hidden_sizes=(6,), partition_dim=3, num_centroids=3, epochs=5))
    x = three_blobs.features[0]
    beta = transform(model.network, [x])[0]
    pinned = GdfcModel(model.network, CentroidSet(np.vstack([beta, beta + 0.3, beta - 0.3]), [2, 0, 1], [1, 1, 1], 3),
                       model.config)
    assert predict(pinned, x) == 2


def test_batch_predict_matches_single(three_blobs):
    model = train(three_blobs, TrainConfig(hidden_sizes=(6,), partition_dim=3, num_centroids=4, epochs=10))
    X = np.random.default_rng(0).uniform(-0.2, 1.2, (100, 3))
    assert predict_batch(model, X).tolist() == [predict(model, x) for x in X]


def test_predict_dimension_mismatch():
    with pytest.raises(ValueError):
        predict(_two_centroid_model(), [1.0, 2.0, 3.0])


def test_model_round_trip_predicts_identically(three_blobs):
    model = train(three_blobs, TrainConfig(hidden_sizes=(6,), partition_dim=3, num_centroids=4, epochs=10))
    back = model_from_dict(json.loads(json.dumps(model_to_dict(model))))
    assert back.network.equals(model.network)
    X = np.random.default_rng(1).uniform(size=(50, 3))
    assert np.array_equal(back.predict(X), model.predict(X))


# ---- guards


def test_collapse_guard_fires_on_saturated_mapping():
    mapped = np.tile([1.0 - 1e-9, 1e-9, 1.0], (20, 1))
    with pytest.raises(DivergenceError):
        _check_collapse(mapped, "sigmoid", 3)
    _check_collapse(np.random.default_rng(0).uniform(size=(20, 3)), "sigmoid", 3)


def test_runaway_guard_and_soft_mode(toy_blobs):
    cfg = TrainConfig(hidden_sizes=(4,), partition_dim=2, num_centroids=2, epochs=5, eta=50.0, max_abs_param=1.0)
    with pytest.raises(DivergenceError):
        train(toy_blobs, cfg)
    soft = train(toy_blobs, cfg.replace(divergence_abort=False))
    assert soft.diverged
    assert np.all(np.isfinite(soft.centroids.positions))


def test_every_recluster_leaves_each_class_a_self_centroid(three_blobs):
    cfg = TrainConfig(hidden_sizes=(5,), partition_dim=3, num_centroids=3, epochs=1)
    net = init_network([3, 5, 3], seed=4)
    for epoch in range(5):
        cset = recluster(net, three_blobs, cfg, epoch)
        assert cset.owned_classes() == {0, 1, 2}
        net, _ = train_epoch(net, three_blobs, cset, cfg, epoch)
