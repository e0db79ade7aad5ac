"""Central finite-difference check of the analytic centroid-loss gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import Network, backward, centroid_loss, forward, loss_gradient, output_delta

REL_TOL = 1e-5
ABS_FLOOR = 1e-7
STEP = 1e-5


@dataclass
class GradcheckResult:
    layer_sizes: list[int]
    xi: float
    lam: float
    max_rel_err: float
    n_params: int
    passed: bool


def _loss_at(net: Network, x, cs, cn, xi, lam) -> float:
    return centroid_loss(forward(net, x).output, cs, cn, xi, lam, net)


def numeric_gradient(net: Network, x, cs, cn, xi: float, lam: float, step: float = STEP):
    """dE/dW and dE/db by central differences, one parameter at a time."""
    dw, db = [], []
    for params, out in ((net.weights, dw), (net.biases, db)):
        for p in params:
            g = np.zeros_like(p)
            it = np.nditer(p, flags=["multi_index"])
            for _ in it:
                idx = it.multi_index
                orig = p[idx]
                p[idx] = orig + step
                up = _loss_at(net, x, cs, cn, xi, lam)
                p[idx] = orig - step
                down = _loss_at(net, x, cs, cn, xi, lam)
                p[idx] = orig
                g[idx] = (up - down) / (2 * step)
            out.append(g)
    return dw, db


def analytic_gradient(net: Network, x, cs, cn, xi: float, lam: float):
    trace = forward(net, x)
    grads = backward(net, trace, output_delta(trace, cs, cn, xi, net.activation))
    return loss_gradient(net, grads, lam)


def compare(analytic, numeric) -> tuple[float, bool]:
    """Worst relative error and whether every entry passes the tolerance."""
    worst, ok = 0.0, True
    for a, n in zip(analytic, numeric):
        diff = np.abs(a - n)
        scale = np.maximum(np.abs(a), np.abs(n))
        rel = np.where(scale > 0, diff / np.where(scale > 0, scale, 1.0), 0.0)
        passing = (diff <= REL_TOL * scale) | (diff <= ABS_FLOOR)
        ok &= bool(passing.all())
        worst = max(worst, float(np.max(np.where(diff <= ABS_FLOOR, 0.0, rel), initial=0.0)))
    return worst, ok


def random_case(rng: np.random.Generator, n_weight_layers: int | None = None, q: int | None = None):
    n_weight_layers = n_weight_layers or int(rng.integers(2, 5))
    q = q or int(rng.integers(2, 9))
    sizes = [int(rng.integers(2, 7))] + [int(rng.integers(2, 7)) for _ in range(n_weight_layers - 1)] + [q]
    weights = [rng.normal(0, 1, (o, i)) for i, o in zip(sizes[:-1], sizes[1:])]
    biases = [rng.normal(0, 0.5, o) for o in sizes[1:]]
    net = Network(sizes, weights, biases, "sigmoid")
    x = rng.uniform(-1, 1, sizes[0])
    cs, cn = rng.uniform(0, 1, q), rng.uniform(0, 1, q)
    return net, x, cs, cn


def run_gradcheck(n_shapes: int = 10, seed: int = 0, xis=(0.0, 0.5, 1.0), lams=(0.0, 1e-3)) -> list[GradcheckResult]:
    rng = np.random.default_rng(seed)
    results = []
    for _ in range(n_shapes):
        net, x, cs, cn = random_case(rng)
        for xi in xis:
            for lam in lams:
                a = analytic_gradient(net, x, cs, cn, xi, lam)
                n = numeric_gradient(net, x, cs, cn, xi, lam)
                worst_w, ok_w = compare(a[0], n[0])
                worst_b, ok_b = compare(a[1], n[1])
                n_params = sum(w.size + b.size for w, b in zip(net.weights, net.biases))
                results.append(GradcheckResult(list(net.layer_sizes), xi, lam, max(worst_w, worst_b),
                                               n_params, ok_w and ok_b))
    return results
