"""JSON model files.

Floats are written with Python's shortest round-trip repr, so a
save/load cycle reproduces every parameter bit for bit.

Envelope::

    {"schema": "gdfc.model/1", "method": "gdfc" | "fnn" | "knn",
     "network": {"schema": "gdfc.network/1", "layer_sizes": [...],
                 "activation": "sigmoid", "weights": [[[row], ...], ...],
                 "biases": [[...], ...]},
     "centroids": {"positions": [[...]], "colors": [...],
                   "member_counts": [...], "num_classes": N},
     "normalizer": {"kind": "minmax", "low": [...], "high": [...]} | null,
     "config": {...}, "training_loss_curve": [...]}

KNN models store ``features``, ``labels``, ``k`` and ``n_classes`` instead
of a network.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .baselines import FnnModel, KnnModel
from .data import Normalizer
from .network import Network
from .partition import CentroidSet
from .trainer import GdfcModel, TrainConfig

MODEL_SCHEMA = "gdfc.model/1"
NETWORK_SCHEMA = "gdfc.network/1"


def network_to_dict(net: Network) -> dict:
    return {
        "schema": NETWORK_SCHEMA,
        "layer_sizes": list(net.layer_sizes),
        "activation": net.activation,
        "weights": [w.tolist() for w in net.weights],
        "biases": [b.tolist() for b in net.biases],
    }


def network_from_dict(d: dict) -> Network:
    if d.get("schema") != NETWORK_SCHEMA:
        raise ValueError(f"unsupported network schema {d.get('schema')!r}")
    return Network(d["layer_sizes"], [np.array(w, dtype=np.float64) for w in d["weights"]],
                   [np.array(b, dtype=np.float64) for b in d["biases"]], d["activation"])


def centroids_to_dict(cs: CentroidSet) -> dict:
    return {"positions": cs.positions.tolist(), "colors": cs.colors.tolist(),
            "member_counts": cs.member_counts.tolist(), "num_classes": cs.num_classes}


def centroids_from_dict(d: dict) -> CentroidSet:
    return CentroidSet(np.array(d["positions"], dtype=np.float64), d["colors"], d["member_counts"], d["num_classes"])


def _normalizer(n):
    return n.to_dict() if n is not None else None


def model_to_dict(model) -> dict:
    if isinstance(model, GdfcModel):
        return {"schema": MODEL_SCHEMA, "method": "gdfc", "network": network_to_dict(model.network),
                "centroids": centroids_to_dict(model.centroids), "normalizer": _normalizer(model.normalizer),
                "config": model.config.to_dict(), "training_loss_curve": list(model.training_loss_curve),
                "diverged": model.diverged}
    if isinstance(model, FnnModel):
        return {"schema": MODEL_SCHEMA, "method": "fnn", "network": network_to_dict(model.network),
                "normalizer": _normalizer(model.normalizer),
                "training_loss_curve": list(model.training_loss_curve)}
    if isinstance(model, KnnModel):
        return {"schema": MODEL_SCHEMA, "method": "knn", "features": model.features.tolist(),
                "labels": model.labels.tolist(), "k": model.k, "n_classes": model.n_classes,
                "normalizer": _normalizer(model.normalizer)}
    raise TypeError(f"cannot serialise {type(model).__name__}")


def model_from_dict(d: dict):
    if d.get("schema") != MODEL_SCHEMA:
        raise ValueError(f"unsupported model schema {d.get('schema')!r}")
    norm = Normalizer.from_dict(d["normalizer"]) if d.get("normalizer") else None
    method = d["method"]
    if method == "gdfc":
        return GdfcModel(network_from_dict(d["network"]), centroids_from_dict(d["centroids"]),
                         TrainConfig.from_dict(d["config"]), list(d["training_loss_curve"]), norm,
                         bool(d.get("diverged", False)))
    if method == "fnn":
        return FnnModel(network_from_dict(d["network"]), norm, list(d.get("training_loss_curve", [])))
    if method == "knn":
        return KnnModel(np.array(d["features"], dtype=np.float64), np.array(d["labels"], dtype=np.int64),
                        d["k"], d["n_classes"], norm)
    raise ValueError(f"unknown method {method!r}")


def save_model(model, path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)), encoding="utf-8")


def load_model(path):
    return model_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
