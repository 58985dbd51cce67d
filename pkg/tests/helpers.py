"""Independent reference implementations used as test oracles."""
import math

import numpy as np


def naive_forward(params, x):
    """Neuron-by-neuron evaluation of one input vector in plain Python."""
    a = [float(v) for v in x]
    n_layers = len(params.weights)
    for l, (W, b) in enumerate(zip(params.weights, params.biases)):
        out = []
        for r in range(W.shape[0]):
            s = float(b[r])
            for c in range(W.shape[1]):
                s += float(W[r, c]) * a[c]
            if l < n_layers - 1:
                s = s if s > 0 else 0.0
            out.append(s)
        a = out
    return a[0]


def central_difference(f, flat, h=1e-5):
    """Gradient of scalar ``f()`` wrt every entry of ``flat`` (mutated and restored)."""
    g = np.empty_like(flat)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + h
        up = f()
        flat[i] = old - h
        down = f()
        flat[i] = old
        g[i] = (up - down) / (2 * h)
    return g


def relative_error(a, b, floor=1e-8):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)


def scalar_mse(preds, labels):
    total, count = 0.0, 0
    for p_row, d_row in zip(preds, labels):
        for p, d in zip(p_row, d_row):
            total += (p - d) ** 2
            count += 1
    return total / count


def scalar_loop_loss(preds):
    total = 0.0
    for a, b, c in preds:
        total += (a + b + c) ** 2
    return total / len(preds)


def brute_force_ensemble(F, x, anchors_x, anchors_y):
    """Mean and population std of the symmetrised anchor estimates, via loops."""
    est = []
    for xa, ya in zip(anchors_x, anchors_y):
        est.append(0.5 * F(x, xa) - 0.5 * F(xa, x) + ya)
    mean = sum(est) / len(est)
    var = sum((e - mean) ** 2 for e in est) / len(est)
    return mean, math.sqrt(var)


def factorized_model(g_params, feature_dim):
    """TnnModel computing g(x1) - g(x2) for a single-input ReLU net ``g``.

    Built as a block-diagonal network over [x1 || x2] whose output layer
    carries +w for the first copy and -w for the second.
    """
    from tnnr.nn import NetConfig, NetParams
    from tnnr.tnn import TnnModel

    hidden = g_params.config.hidden_dims
    cfg = NetConfig(2 * feature_dim, tuple(2 * h for h in hidden), seed=0)
    p = NetParams(cfg)
    n = len(hidden)
    for l in range(n):
        W, b = g_params.weights[l], g_params.biases[l]
        o, i = W.shape
        p.weights[l][:o, :i] = W
        p.weights[l][o:, i:] = W
        p.biases[l][:o] = b
        p.biases[l][o:] = b
    w_out = g_params.weights[n]
    h = w_out.shape[1]
    p.weights[n][:, :h] = w_out
    p.weights[n][:, h:] = -w_out
    return TnnModel(p, feature_dim)
