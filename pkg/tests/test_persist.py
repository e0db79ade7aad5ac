import json

import numpy as np
import pytest

from gdfc.baselines import FnnConfig, KnnConfig, fnn_fit, knn_fit
from gdfc.data import apply_normalizer, fit_normalizer
from gdfc.network import init_network
from gdfc.persist import (
    load_model,
    model_from_dict,
    network_from_dict,
    network_to_dict,
    save_model,
)
from gdfc.trainer import TrainConfig, train


def test_network_round_trip_is_bit_exact():
    net = init_network([5, 7, 3], seed=2)
    net.weights[0][0, 0] = 0.1 + 0.2  # a value with a long repr
    back = network_from_dict(json.loads(json.dumps(network_to_dict(net))))
    assert back.equals(net)
    assert network_to_dict(net)["schema"] == "gdfc.network/1"


def test_rejects_unknown_schema():
    with pytest.raises(ValueError):
        network_from_dict({"schema": "other/9"})
    with pytest.raises(ValueError):
        model_from_dict({"schema": "gdfc.model/0"})


@pytest.mark.parametrize("method", ["gdfc", "fnn", "knn"])
def test_model_file_round_trip(tmp_path, three_blobs, method):
    data = apply_normalizer(three_blobs, fit_normalizer(three_blobs))
    if method == "gdfc":
        model = train(data, TrainConfig(hidden_sizes=(5,), partition_dim=3, num_centroids=4, epochs=5))
    elif method == "fnn":
        model = fnn_fit(data, FnnConfig(hidden=5, epochs=5))
    else:
        model = knn_fit(data, KnnConfig(3))
    path = tmp_path / "m.json"
    save_model(model, path)
    assert json.loads(path.read_text())["method"] == method
    back = load_model(path)
    X = np.random.default_rng(0).uniform(size=(40, 3))
    assert np.array_equal(back.predict(X), model.predict(X))
    assert np.array_equal(back.normalizer.low, model.normalizer.low)
