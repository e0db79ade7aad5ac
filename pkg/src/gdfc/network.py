"""Feedforward network kernels for the centroid loss.

Weights are stored per layer as ``(fan_out, fan_in)`` matrices, so a forward
step is ``z = W @ a + b``.  Every non-input layer uses the same activation.

Sign conventions: a *delta* is the negative derivative of the data loss with
respect to a pre-activation, and :class:`GradientSet` holds descent
directions (``delta @ a.T`` and ``delta``).  :func:`apply_updates` adds the
learning rate and the L2 decay term.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np


ACTIVATIONS = ("sigmoid", "tanh")


class DivergenceError(FloatingPointError):
    """Raised when a training step produces non-finite or runaway parameters."""


def _sigmoid(z):
    # split branches so exp never overflows
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def activate(kind: str, z):
    if kind == "sigmoid":
        return _sigmoid(z)
    if kind == "tanh":
        return np.tanh(z)
    raise ValueError(f"unknown activation {kind!r}")


def activation_grad(kind: str, a):
    """Derivative of the activation, expressed through its output ``a``."""
    if kind == "sigmoid":
        return a * (1.0 - a)
    if kind == "tanh":
        return 1.0 - a * a
    raise ValueError(f"unknown activation {kind!r}")


@dataclass
class Network:
    layer_sizes: list[int]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "sigmoid"

    def __post_init__(self):
        sizes = [int(s) for s in self.layer_sizes]
        if len(sizes) < 3:
            raise ValueError("network needs an input, at least one hidden and an output layer")
        if min(sizes) < 1:
            raise ValueError(f"layer sizes must be positive, got {sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 1:
            raise ValueError("need one weight matrix and bias vector per layer transition")
        self.layer_sizes = sizes
        self.weights = [np.array(w, dtype=np.float64) for w in self.weights]
        self.biases = [np.array(b, dtype=np.float64) for b in self.biases]
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (sizes[l + 1], sizes[l]):
                raise ValueError(f"weights[{l}] has shape {w.shape}, expected {(sizes[l + 1], sizes[l])}")
            if b.shape != (sizes[l + 1],):
                raise ValueError(f"biases[{l}] has shape {b.shape}, expected {(sizes[l + 1],)}")
            if not (np.all(np.isfinite(w)) and np.all(np.isfinite(b))):
                raise DivergenceError(f"non-finite parameters in layer {l}")

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    @property
    def n_layers(self) -> int:
        """Number of weight layers (L - 1 in layer-count terms)."""
        return len(self.weights)

    def copy(self) -> "Network":
        return Network(list(self.layer_sizes), [w.copy() for w in self.weights],
                       [b.copy() for b in self.biases], self.activation)

    def weight_sq_sum(self) -> float:
        return float(sum(np.sum(w * w) for w in self.weights))

    def equals(self, other: "Network") -> bool:
        """Bit-for-bit parameter equality."""
        return (
            self.layer_sizes == other.layer_sizes
            and self.activation == other.activation
            and all(np.array_equal(a, b) for a, b in zip(self.weights, other.weights))
            and all(np.array_equal(a, b) for a, b in zip(self.biases, other.biases))
        )


@dataclass
class ActivationTrace:
    # index 0 is the input sample in both lists; pre_activations[0] is a copy of it
    pre_activations: list[np.ndarray]
    activations: list[np.ndarray]

    @property
    def output(self) -> np.ndarray:
        return self.activations[-1]


@dataclass
class GradientSet:
    deltas: list[np.ndarray]
    weight_updates: list[np.ndarray]
    bias_updates: list[np.ndarray] = field(default_factory=list)


def init_network(layer_sizes: Sequence[int], activation: str = "sigmoid", seed: int = 0) -> Network:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases."""
    sizes = [int(s) for s in layer_sizes]
    if len(sizes) < 3:
        raise ValueError("network needs an input, at least one hidden and an output layer")
    if min(sizes) < 1:
        raise ValueError(f"layer sizes must be positive, got {sizes}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return Network(sizes, weights, biases, activation)


def _as_sample(net: Network, sample) -> np.ndarray:
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != net.input_dim:
        raise ValueError(f"sample has shape {x.shape}, network expects ({net.input_dim},)")
    if not np.all(np.isfinite(x)):
        raise ValueError("sample contains non-finite values")
    return x


def forward(net: Network, sample) -> ActivationTrace:
    x = _as_sample(net, sample)
    pre, acts = [x.copy()], [x]
    a = x
    for w, b in zip(net.weights, net.biases):
        z = w @ a + b
        a = activate(net.activation, z)
        pre.append(z)
        acts.append(a)
    return ActivationTrace(pre, acts)


def transform(net: Network, X) -> np.ndarray:
    """Map a batch of samples (rows) into the partition space."""
    A = np.asarray(X, dtype=np.float64)
    if A.ndim == 1:
        A = A[None, :]
    if A.shape[1] != net.input_dim:
        raise ValueError(f"batch has {A.shape[1]} columns, network expects {net.input_dim}")
    for w, b in zip(net.weights, net.biases):
        A = activate(net.activation, A @ w.T + b)
    return A


def _position(c) -> np.ndarray:
    return np.asarray(getattr(c, "position", c), dtype=np.float64)


def centroid_loss(output, c_self, c_noself, xi: float, lam: float, net: Network | None = None) -> float:
    """Per-sample centroid loss with optional L2 penalty over all weights.

    ``0.5 * sum((b - cs)**2 - xi * (b - cn)**2) + 0.5 * lam * sum(w**2)``;
    biases are not penalised.
    """
    beta = np.asarray(output, dtype=np.float64)
    cs, cn = _position(c_self), _position(c_noself)
    if not (beta.shape == cs.shape == cn.shape) or beta.ndim != 1:
        raise ValueError(f"dimension mismatch: output {beta.shape}, self {cs.shape}, noself {cn.shape}")
    if xi < 0 or lam < 0:
        raise ValueError("xi and lambda must be non-negative")
    if not (np.all(np.isfinite(beta)) and np.all(np.isfinite(cs)) and np.all(np.isfinite(cn))):
        raise ValueError("non-finite input to centroid_loss")
    loss = 0.5 * float(np.sum((beta - cs) ** 2 - xi * (beta - cn) ** 2))
    if lam and net is not None:
        loss += 0.5 * lam * net.weight_sq_sum()
    return loss


def output_delta(trace: ActivationTrace, c_self, c_noself, xi: float, activation: str = "sigmoid") -> np.ndarray:
    beta = trace.output
    cs, cn = _position(c_self), _position(c_noself)
    if cs.shape != beta.shape or cn.shape != beta.shape:
        raise ValueError(f"centroid dimension {cs.shape}/{cn.shape} does not match output {beta.shape}")
    d_act = activation_grad(activation, beta)
    return (cs - beta) * d_act - xi * (cn - beta) * d_act


def backward(net: Network, trace: ActivationTrace, delta_out) -> GradientSet:
    delta = np.asarray(delta_out, dtype=np.float64)
    if delta.shape != (net.output_dim,):
        raise ValueError(f"output delta has shape {delta.shape}, expected ({net.output_dim},)")
    n = net.n_layers
    deltas: list[np.ndarray] = [None] * n  # type: ignore[list-item]
    deltas[-1] = delta
    for l in range(n - 1, 0, -1):
        # activations[l] is the output of weight layer l-1
        deltas[l - 1] = activation_grad(net.activation, trace.activations[l]) * (net.weights[l].T @ deltas[l])
    w_up = [np.outer(deltas[l], trace.activations[l]) for l in range(n)]
    b_up = [d.copy() for d in deltas]
    return GradientSet(deltas, w_up, b_up)


def loss_gradient(net: Network, grads: GradientSet, lam: float) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Convert descent directions back to dE/dW and dE/db (L2 term included)."""
    dw = [-gw + lam * w for gw, w in zip(grads.weight_updates, net.weights)]
    db = [-gb for gb in grads.bias_updates]
    return dw, db


def apply_updates(net: Network, grads: GradientSet, eta: float, lam: float) -> Network:
    """One SGD step: ``W += eta * (delta a^T - lam W)``, ``b += eta * delta``."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    if len(grads.weight_updates) != net.n_layers:
        raise ValueError("gradient set does not match network depth")
    weights, biases = [], []
    for w, b, gw, gb in zip(net.weights, net.biases, grads.weight_updates, grads.bias_updates):
        if gw.shape != w.shape or gb.shape != b.shape:
            raise ValueError("gradient shapes do not match network")
        with np.errstate(over="ignore", invalid="ignore"):
            w_new = w + eta * (gw - lam * w)
            b_new = b + eta * gb
        if not (np.all(np.isfinite(w_new)) and np.all(np.isfinite(b_new))):
            raise DivergenceError("non-finite parameter after update")
        weights.append(w_new)
        biases.append(b_new)
    return Network(list(net.layer_sizes), weights, biases, net.activation)
