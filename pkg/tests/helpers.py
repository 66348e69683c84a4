"""Shared oracles for the test suite."""

import numpy as np

from mlfexplain.nn import DenseLayer, LayeredNetwork


def random_net(sizes, seed, biases=False, activation="relu"):
    rng = np.random.default_rng(seed)
    layers = []
    for k, (a, b) in enumerate(zip(sizes, sizes[1:])):
        w = rng.normal(0.0, 1.0 / np.sqrt(a), size=(b, a))
        bias = rng.normal(0.0, 0.1, size=b) if biases else np.zeros(b)
        act = activation if k < len(sizes) - 2 else "identity"
        layers.append(DenseLayer(w, bias, act))
    return LayeredNetwork(tuple(layers))


def central_difference(f, params, step=1e-5):
    """Numerical gradient of scalar ``f()`` w.r.t. every array in ``params`` (in place)."""
    grads = []
    for p in params:
        g = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + step
            up = f()
            p[i] = old - step
            down = f()
            p[i] = old
            g[i] = (up - down) / (2 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-8):
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def linear_segment_classifier(partition, hot, channels=1, n_classes=2):
    """Class 0 logit = sum of the pixels in segment ``hot``; other logits 0."""
    d = partition.labels.size * channels
    w = np.zeros((n_classes, d))
    w[0] = np.repeat(partition.labels == hot, channels).astype(np.float64)
    return LayeredNetwork((DenseLayer(w, np.zeros(n_classes)),))
