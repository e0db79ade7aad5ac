"""GDFC training loop: map, cluster, color, then per-sample SGD."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import _kernels
from .data import Dataset
from .network import (
    DivergenceError,
    Network,
    apply_updates,
    backward,
    centroid_loss,
    forward,
    init_network,
    output_delta,
    transform,
)
from .partition import (
    CentroidSet,
    ColorationError,
    color_centroids,
    kmeans,
    nearest_any_batch,
    nearest_any_index,
    nearest_noself_index,
    nearest_self_index,
)

log = logging.getLogger(__name__)

SATURATION_MARGIN = 1e-6
COLLAPSE_SATURATED_FRACTION = 0.5
COLLAPSE_SPREAD = 1e-2

# stream ids for SeedSequence so init, clustering and shuffling never share draws
_INIT, _KMEANS, _SHUFFLE = 0, 1, 2


def derive_seed(seed: int, *path: int) -> int:
    return int(np.random.SeedSequence([int(seed), *map(int, path)]).generate_state(1)[0])


@dataclass(frozen=True)
class TrainConfig:
    hidden_sizes: tuple[int, ...] = (20,)
    partition_dim: int = 6
    num_centroids: int = 6
    xi: float = 0.5
    lam: float = 1e-5
    eta: float = 0.5
    eta_decay: float = 1.0
    epochs: int = 500
    recluster_every: int = 1
    seed: int = 0
    kmeans_max_iters: int = 300
    kmeans_tol: float = 1e-6
    divergence_abort: bool = True
    max_abs_param: float = 1e3
    keep_best: bool = False
    activation: str = "sigmoid"

    def __post_init__(self):
        object.__setattr__(self, "hidden_sizes", tuple(int(h) for h in self.hidden_sizes))
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise ValueError("need at least one hidden layer with >= 1 neuron")
        if self.partition_dim < 1:
            raise ValueError("partition_dim must be >= 1")
        if self.num_centroids < 1:
            raise ValueError("num_centroids must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.recluster_every < 1:
            raise ValueError("recluster_every must be >= 1")
        if self.xi < 0 or self.lam < 0 or self.eta < 0:
            raise ValueError("xi, lam and eta must be non-negative")
        if not 0 < self.eta_decay <= 1:
            raise ValueError("eta_decay must lie in (0, 1]")
        if self.max_abs_param <= 0:
            raise ValueError("max_abs_param must be positive")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden_sizes"] = list(self.hidden_sizes)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def replace(self, **changes) -> "TrainConfig":
        return TrainConfig.from_dict({**self.to_dict(), **changes})


@dataclass
class GdfcModel:
    network: Network
    centroids: CentroidSet
    config: TrainConfig
    training_loss_curve: list[float] = field(default_factory=list)
    normalizer: object = None
    diverged: bool = False

    def predict(self, X) -> np.ndarray:
        return predict_batch(self, X)


def _check_runaway(net: Network, cfg: TrainConfig) -> None:
    peak = max(max(float(np.max(np.abs(w))), float(np.max(np.abs(b)))) for w, b in zip(net.weights, net.biases))
    if peak > cfg.max_abs_param:
        raise DivergenceError(f"parameter magnitude {peak:.3g} exceeds {cfg.max_abs_param:g}")


def _epoch_eta(cfg: TrainConfig, epoch: int) -> float:
    return cfg.eta * cfg.eta_decay ** epoch


def shuffle_order(n: int, cfg: TrainConfig, epoch: int) -> np.ndarray:
    return np.random.default_rng(derive_seed(cfg.seed, _SHUFFLE, epoch)).permutation(n)


def train_epoch(net: Network, data: Dataset, cset: CentroidSet, cfg: TrainConfig, epoch: int = 0,
                engine: str = "compiled") -> tuple[Network, float]:
    """One shuffled pass of per-sample SGD against fixed centroids.

    Returns the updated network and the mean per-sample loss, each loss
    evaluated just before that sample's update.  ``engine="reference"``
    composes the public kernels; ``"compiled"`` runs the fused loop.
    """
    if len(data) == 0:
        raise ValueError("empty dataset")
    if cset.dimension != net.output_dim:
        raise ValueError("centroid dimension does not match network output")
    if not np.any(cset.colors >= 0):
        raise ColorationError("centroid set is not colored")
    eta = _epoch_eta(cfg, epoch)
    order = shuffle_order(len(data), cfg, epoch)
    X, y = data.features, data.labels

    if engine == "reference":
        total = 0.0
        for j in order:
            trace = forward(net, X[j])
            ks = nearest_self_index(trace.output, cset, int(y[j]))
            kn = nearest_noself_index(trace.output, cset, int(y[j]))
            cs, cn = cset.positions[ks], cset.positions[kn]
            total += centroid_loss(trace.output, cs, cn, cfg.xi, cfg.lam, net)
            if eta > 0:
                grads = backward(net, trace, output_delta(trace, cs, cn, cfg.xi, net.activation))
                net = apply_updates(net, grads, eta, cfg.lam)
        mean_loss = total / len(order)
    elif engine == "compiled":
        params, sizes, w_off, b_off = _kernels.flatten(net.weights, net.biases)
        losses = np.zeros(len(order))
        status = _kernels.sgd_epoch(
            params, sizes, w_off, b_off, _kernels.ACT_CODES[net.activation],
            np.ascontiguousarray(X, dtype=np.float64), np.ascontiguousarray(y, dtype=np.int64),
            order.astype(np.int64), np.ascontiguousarray(cset.positions), cset.colors.astype(np.int64),
            float(cfg.xi), float(eta), float(cfg.lam), losses)
        if status == -2:
            raise ColorationError("a sample had no self or non-self centroid")
        if status >= 0:
            raise DivergenceError(f"non-finite parameter at step {status} of epoch {epoch}")
        weights, biases = _kernels.unflatten(params, sizes, w_off, b_off)
        net = Network(list(net.layer_sizes), weights, biases, net.activation)
        mean_loss = float(losses.mean())
    else:
        raise ValueError(f"unknown engine {engine!r}")

    _check_runaway(net, cfg)
    if not np.isfinite(mean_loss):
        raise DivergenceError(f"non-finite epoch loss at epoch {epoch}")
    return net, mean_loss


def _check_collapse(mapped: np.ndarray, activation: str, epoch: int) -> None:
    """Abort when the whole training set sits in one saturated corner.

    Overshooting steps with a bounded activation do not overflow; they drive
    every sample into the same saturated region where the gradients vanish.
    """
    if activation == "sigmoid":
        margin = np.minimum(mapped, 1.0 - mapped)
    else:
        margin = 1.0 - np.abs(mapped)
    saturated = float(np.mean(margin < SATURATION_MARGIN))
    spread = float(np.max(np.ptp(mapped, axis=0)))
    if saturated >= COLLAPSE_SATURATED_FRACTION and spread < COLLAPSE_SPREAD:
        raise DivergenceError(
            f"mapping collapsed into saturation at epoch {epoch} "
            f"({saturated:.0%} of outputs saturated, spread {spread:.2g})")


def recluster(net: Network, data: Dataset, cfg: TrainConfig, epoch: int) -> CentroidSet:
    """Map every sample, run k-means and color the centroids."""
    mapped = transform(net, data.features)
    _check_collapse(mapped, net.activation, epoch)
    try:
        cset, assign = kmeans(mapped, cfg.num_centroids, seed=derive_seed(cfg.seed, _KMEANS, epoch),
                              max_iters=cfg.kmeans_max_iters, tol=cfg.kmeans_tol,
                              num_classes=data.n_classes)
    except ValueError as exc:
        raise ColorationError(f"clustering failed at epoch {epoch}: {exc}") from exc
    colored = color_centroids(cset, assign, data.labels, mapped, num_classes=data.n_classes)
    missing = set(np.unique(data.labels).tolist()) - colored.owned_classes()
    # every training sample must have a self centroid before the next SGD pass
    assert not missing, f"classes {missing} own no centroid after repair"
    return colored


def train(data: Dataset, cfg: TrainConfig, engine: str = "compiled") -> GdfcModel:
    if cfg.eta <= 0:
        raise ValueError("eta must be positive for training")
    if cfg.num_centroids < data.n_classes:
        raise ValueError(f"num_centroids={cfg.num_centroids} is below the class count {data.n_classes}")
    if len(data) < cfg.num_centroids:
        raise ValueError(f"dataset has {len(data)} samples, fewer than num_centroids={cfg.num_centroids}")

    sizes = [data.n_features, *cfg.hidden_sizes, cfg.partition_dim]
    net = init_network(sizes, cfg.activation, seed=derive_seed(cfg.seed, _INIT))
    curve: list[float] = []
    best_net, best_loss = net, np.inf
    diverged = False
    cset = None
    for epoch in range(cfg.epochs):
        try:
            if epoch % cfg.recluster_every == 0 or cset is None:
                cset = recluster(net, data, cfg, epoch)
            net, loss = train_epoch(net, data, cset, cfg, epoch, engine)
        except DivergenceError:
            if cfg.divergence_abort:
                raise
            log.warning("training diverged at epoch %d; keeping the last finite network", epoch)
            diverged = True
            break
        curve.append(loss)
        if cfg.keep_best and loss < best_loss:
            best_net, best_loss = net, loss

    final = best_net if cfg.keep_best else net
    if diverged:
        mapped = transform(final, data.features)
        cset, assign = kmeans(mapped, cfg.num_centroids, seed=derive_seed(cfg.seed, _KMEANS, cfg.epochs),
                              max_iters=cfg.kmeans_max_iters, tol=cfg.kmeans_tol, num_classes=data.n_classes)
        final_set = color_centroids(cset, assign, data.labels, mapped, num_classes=data.n_classes)
    else:
        final_set = recluster(final, data, cfg, cfg.epochs)
    return GdfcModel(final, final_set, cfg, curve, data.normalizer, diverged)


def predict(model: GdfcModel, sample) -> int:
    trace = forward(model.network, sample)
    return int(model.centroids.colors[nearest_any_index(trace.output, model.centroids)])


def predict_batch(model: GdfcModel, X) -> np.ndarray:
    mapped = transform(model.network, X)
    return model.centroids.colors[nearest_any_batch(mapped, model.centroids)].astype(np.int64)


def fit(data: Dataset, cfg: TrainConfig) -> GdfcModel:
    return train(data, cfg)
