import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gdfc.baselines import (
    FnnConfig,
    FnnModel,
    KnnConfig,
    KnnModel,
    corner_centroids,
    fnn_fit,
    fnn_predict,
    fnn_predict_batch,
    fnn_train,
    knn_fit,
    knn_predict,
    knn_predict_batch,
)
from gdfc.data import Dataset
from gdfc.network import Network
from gdfc.partition import nearest_any_index


def _fixed_output_model(outputs):
    """FNN whose output layer ignores the input and emits ``outputs``."""
    out = np.asarray(outputs, dtype=np.float64)
    logits = np.log(out / (1 - out))
    n = len(out)
    net = Network([2, 1, n], [np.zeros((1, 2)), np.zeros((n, 1))], [np.zeros(1), logits])
    return FnnModel(net)


def test_fnn_learns_xor():
    xor = Dataset(np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]]), [0, 1, 1, 0])
    model = fnn_train(xor, hidden=4, eta=2.0, lam=0.0, epochs=3000, seed=0)
    assert fnn_predict_batch(model, xor.features).tolist() == [0, 1, 1, 0]


def test_fnn_rejects_bad_sizes():
    d = Dataset(np.zeros((4, 2)), [0, 1, 0, 1])
    with pytest.raises(ValueError):
        fnn_train(d, hidden=0)
    with pytest.raises(ValueError):
        fnn_train(Dataset(np.zeros((3, 2)), [0, 0, 0]), hidden=2)


def test_fnn_is_deterministic(toy_blobs):
    cfg = FnnConfig(hidden=5, epochs=20, seed=3)
    a, b = fnn_fit(toy_blobs, cfg), fnn_fit(toy_blobs, cfg)
    assert a.network.equals(b.network) and a.training_loss_curve == b.training_loss_curve
    assert a.network.output_dim == toy_blobs.n_classes


def test_fnn_predict_readout():
    assert fnn_predict(_fixed_output_model([0.9, 0.1]), [0.3, 0.3]) == 0
    assert fnn_predict(_fixed_output_model([0.4, 0.7, 0.7]), [0.3, 0.3]) == 1
    assert fnn_predict(_fixed_output_model([0.5, 0.5]), [0.0, 0.0]) == 0
    with pytest.raises(ValueError):
        fnn_predict(_fixed_output_model([0.9, 0.1]), [1.0])


def test_fnn_argmax_equals_nearest_corner():
    rng = np.random.default_rng(0)
    corners = corner_centroids(4)
    for _ in range(100):
        out = rng.uniform(0.01, 0.99, 4)
        assert fnn_predict(_fixed_output_model(out), [0.0, 0.0]) == nearest_any_index(out, corners)


# ---- knn


def knn_oracle(Xtr, ytr, q, k, n):
    d = [(float(np.sum((x - q) ** 2)), i) for i, x in enumerate(Xtr)]
    d.sort()
    votes = [0] * n
    for _, i in d[:k]:
        votes[ytr[i]] += 1
    return max(range(n), key=lambda c: (votes[c], -c))


def test_knn_examples():
    X = np.array([[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0], [4.0, 4.0]])
    m = knn_fit(Dataset(X, [0, 1, 1, 2, 1]), KnnConfig(1))
    assert knn_predict(m, [3.0, 3.0]) == 2
    everyone = knn_fit(Dataset(X, [0, 1, 1, 2, 1]), KnnConfig(5))
    assert knn_predict(everyone, [0.0, 0.0]) == 1


def test_knn_tie_rules():
    X = np.array([[-1.0], [1.0], [5.0]])
    m = KnnModel(X, np.array([1, 0, 0]), 1, 2)
    # equal distances: lower training index wins
    assert knn_predict(m, [0.0]) == 1
    m2 = KnnModel(X, np.array([1, 0, 0]), 2, 2)
    # one vote each: lower class wins
    assert knn_predict(m2, [0.0]) == 0


def test_knn_validation():
    with pytest.raises(ValueError):
        KnnModel(np.zeros((0, 2)), np.zeros(0, dtype=int), 1, 2)
    with pytest.raises(ValueError):
        KnnModel(np.zeros((3, 2)), np.zeros(3, dtype=int), 4, 2)
    with pytest.raises(ValueError):
        knn_predict_batch(KnnModel(np.zeros((3, 2)), np.zeros(3, dtype=int), 1, 2), np.zeros((1, 3)))


def test_knn_random_50_point_instance():
    rng = np.random.default_rng(4)
    X, y = rng.uniform(size=(50, 3)), rng.integers(0, 3, 50)
    m = KnnModel(X, y, 5, 3)
    Q = rng.uniform(size=(30, 3))
    assert knn_predict_batch(m, Q).tolist() == [knn_oracle(X, y, q, 5, 3) for q in Q]


@given(st.integers(0, 100_000), st.integers(1, 200), st.integers(1, 30))
def test_knn_matches_brute_force(seed, n, k):
    rng = np.random.default_rng(seed)
    k = min(k, n)
    X = rng.integers(0, 4, (n, 2)).astype(float)  # coarse grid gives distance ties
    y = rng.integers(0, 4, n)
    m = KnnModel(X, y, k, 4)
    q = rng.integers(0, 4, 2).astype(float)
    assert knn_predict(m, q) == knn_oracle(X, y, q, k, 4)
