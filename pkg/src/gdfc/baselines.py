"""Comparison classifiers: one-per-class FNN and k-nearest neighbours.

The FNN is the centroid-loss trainer with the floating parts switched off:
xi = 0 and one fixed centroid per class at the one-hot corner, which makes
the update rule ordinary squared-error backpropagation with L2 decay.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .data import Dataset
from .network import Network, init_network, transform
from .partition import CentroidSet
from .trainer import TrainConfig, derive_seed, train_epoch


@dataclass(frozen=True)
class FnnConfig:
    hidden: int = 20
    eta: float = 0.05
    lam: float = 1e-4
    epochs: int = 500
    seed: int = 0
    eta_decay: float = 1.0

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "FnnConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class FnnModel:
    network: Network
    normalizer: object = None
    training_loss_curve: list[float] = field(default_factory=list)

    def predict(self, X) -> np.ndarray:
        return fnn_predict_batch(self, X)


def corner_centroids(n_classes: int) -> CentroidSet:
    return CentroidSet(np.eye(n_classes), np.arange(n_classes), np.zeros(n_classes), n_classes)


def fnn_train(data: Dataset, hidden: int = 20, eta: float = 0.05, lam: float = 1e-4, epochs: int = 500,
              seed: int = 0, eta_decay: float = 1.0) -> FnnModel:
    if hidden < 1:
        raise ValueError("hidden layer needs at least one neuron")
    n = data.n_classes
    if n < 2:
        raise ValueError("need at least two classes")
    cfg = TrainConfig(hidden_sizes=(hidden,), partition_dim=n, num_centroids=n, xi=0.0, lam=lam, eta=eta,
                      eta_decay=eta_decay, epochs=epochs, seed=seed)
    corners = corner_centroids(n)
    net = init_network([data.n_features, hidden, n], "sigmoid", seed=derive_seed(seed, 0))
    curve = []
    for epoch in range(epochs):
        net, loss = train_epoch(net, data, corners, cfg, epoch)
        curve.append(loss)
    return FnnModel(net, data.normalizer, curve)


def fnn_fit(data: Dataset, cfg: FnnConfig) -> FnnModel:
    return fnn_train(data, cfg.hidden, cfg.eta, cfg.lam, cfg.epochs, cfg.seed, cfg.eta_decay)


def fnn_predict_batch(model: FnnModel, X) -> np.ndarray:
    # argmax returns the first maximum, i.e. the lowest class on ties
    return np.argmax(transform(model.network, X), axis=1).astype(np.int64)


def fnn_predict(model: FnnModel, sample) -> int:
    x = np.asarray(sample, dtype=np.float64)
    if x.shape != (model.network.input_dim,):
        raise ValueError(f"sample has shape {x.shape}, expected ({model.network.input_dim},)")
    return int(fnn_predict_batch(model, x[None, :])[0])


@dataclass(frozen=True)
class KnnConfig:
    k: int = 5

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "KnnConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


@dataclass
class KnnModel:
    features: np.ndarray
    labels: np.ndarray
    k: int
    n_classes: int
    normalizer: object = None

    def __post_init__(self):
        if len(self.labels) == 0:
            raise ValueError("KNN needs at least one training sample")
        if not 1 <= self.k <= len(self.labels):
            raise ValueError(f"k={self.k} must lie in [1, {len(self.labels)}]")

    def predict(self, X) -> np.ndarray:
        return knn_predict_batch(self, X)


def knn_fit(data: Dataset, cfg: KnnConfig) -> KnnModel:
    return KnnModel(data.features.copy(), data.labels.copy(), min(cfg.k, len(data)), data.n_classes, data.normalizer)


def knn_predict_batch(model: KnnModel, X) -> np.ndarray:
    Q = np.asarray(X, dtype=np.float64)
    if Q.ndim == 1:
        Q = Q[None, :]
    if Q.shape[1] != model.features.shape[1]:
        raise ValueError("query dimension does not match training data")
    diff = Q[:, None, :] - model.features[None, :, :]
    d = np.einsum("ijk,ijk->ij", diff, diff)
    # stable sort keeps lower training indices first among equal distances
    nearest = np.argsort(d, axis=1, kind="stable")[:, :model.k]
    out = np.empty(len(Q), dtype=np.int64)
    for i, row in enumerate(nearest):
        out[i] = np.argmax(np.bincount(model.labels[row], minlength=model.n_classes))
    return out


def knn_predict(model: KnnModel, sample) -> int:
    return int(knn_predict_batch(model, sample)[0])
