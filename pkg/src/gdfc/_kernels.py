"""Compiled per-sample SGD epoch over a flat parameter vector.

Layout: for each weight layer l, the (out x in) weight matrix in row-major
order followed by its bias vector.  ``w_off[l]`` / ``b_off[l]`` index into
the flat array.  Mirrors network.forward/output_delta/backward/apply_updates
step for step; tests compare the two paths.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

SIGMOID = 0
TANH = 1

ACT_CODES = {"sigmoid": SIGMOID, "tanh": TANH}


def flatten(weights, biases):
    sizes = [weights[0].shape[1]] + [w.shape[0] for w in weights]
    w_off, b_off, chunks, pos = [], [], [], 0
    for w, b in zip(weights, biases):
        w_off.append(pos)
        pos += w.size
        b_off.append(pos)
        pos += b.size
        chunks += [w.ravel(), b]
    return (np.concatenate(chunks).astype(np.float64), np.array(sizes, dtype=np.int64),
            np.array(w_off, dtype=np.int64), np.array(b_off, dtype=np.int64))


def unflatten(params, sizes, w_off, b_off):
    weights, biases = [], []
    for l in range(len(sizes) - 1):
        n_in, n_out = sizes[l], sizes[l + 1]
        weights.append(params[w_off[l]:w_off[l] + n_in * n_out].reshape(n_out, n_in).copy())
        biases.append(params[b_off[l]:b_off[l] + n_out].copy())
    return weights, biases


@njit(cache=True)
def _act(code, z):
    if code == SIGMOID:
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        ez = math.exp(z)
        return ez / (1.0 + ez)
    return math.tanh(z)


@njit(cache=True)
def _dact(code, a):
    if code == SIGMOID:
        return a * (1.0 - a)
    return 1.0 - a * a


@njit(cache=True)
def _nearest(beta, cpos, ccol, label, want_self):
    best = -1
    best_d = 0.0
    for k in range(cpos.shape[0]):
        c = ccol[k]
        if c < 0:
            continue
        if want_self and c != label:
            continue
        if (not want_self) and c == label:
            continue
        d = 0.0
        for q in range(cpos.shape[1]):
            t = beta[q] - cpos[k, q]
            d += t * t
        if best < 0 or d < best_d:
            best = k
            best_d = d
    return best


@njit(cache=True)
def sgd_epoch(params, sizes, w_off, b_off, act, X, labels, order, cpos, ccol, xi, eta, lam,
              sample_losses):
    """Run one pass over ``order``.  Returns the index (into ``order``) of
    the step that produced a non-finite parameter, -1 when clean, or -2 if a
    sample had no self / non-self centroid."""
    n_layers = sizes.shape[0] - 1
    a_off = np.zeros(n_layers + 2, dtype=np.int64)
    for l in range(n_layers + 1):
        a_off[l + 1] = a_off[l] + sizes[l]
    acts = np.zeros(a_off[n_layers + 1])
    deltas = np.zeros(a_off[n_layers + 1])
    Q = sizes[n_layers]

    wsq = 0.0
    for l in range(n_layers):
        for i in range(sizes[l] * sizes[l + 1]):
            v = params[w_off[l] + i]
            wsq += v * v

    for step in range(order.shape[0]):
        j = order[step]
        for i in range(sizes[0]):
            acts[i] = X[j, i]
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            for o in range(n_out):
                z = params[b_off[l] + o]
                row = w_off[l] + o * n_in
                for i in range(n_in):
                    z += params[row + i] * acts[a_off[l] + i]
                acts[a_off[l + 1] + o] = _act(act, z)

        beta = acts[a_off[n_layers]:a_off[n_layers] + Q]
        label = labels[j]
        ks = _nearest(beta, cpos, ccol, label, True)
        kn = _nearest(beta, cpos, ccol, label, False)
        if ks < 0 or kn < 0:
            return -2

        loss = 0.0
        for q in range(Q):
            rs = beta[q] - cpos[ks, q]
            rn = beta[q] - cpos[kn, q]
            loss += rs * rs - xi * rn * rn
            g = _dact(act, beta[q])
            deltas[a_off[n_layers] + q] = (cpos[ks, q] - beta[q]) * g - xi * (cpos[kn, q] - beta[q]) * g
        sample_losses[step] = 0.5 * loss + 0.5 * lam * wsq

        # hidden deltas use pre-update weights
        for l in range(n_layers - 1, 0, -1):
            n_mid = sizes[l]
            n_out = sizes[l + 1]
            for h in range(n_mid):
                s = 0.0
                for o in range(n_out):
                    s += params[w_off[l] + o * n_mid + h] * deltas[a_off[l + 1] + o]
                deltas[a_off[l] + h] = _dact(act, acts[a_off[l] + h]) * s

        wsq = 0.0
        for l in range(n_layers):
            n_in = sizes[l]
            n_out = sizes[l + 1]
            for o in range(n_out):
                d = deltas[a_off[l + 1] + o]
                row = w_off[l] + o * n_in
                for i in range(n_in):
                    w = params[row + i]
                    w = w + eta * (d * acts[a_off[l] + i] - lam * w)
                    if not math.isfinite(w):
                        return step
                    params[row + i] = w
                    wsq += w * w
                bb = params[b_off[l] + o] + eta * d
                if not math.isfinite(bb):
                    return step
                params[b_off[l] + o] = bb
    return -1
