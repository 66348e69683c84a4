"""Dense feed-forward networks: forward pass, backprop and SGD training.

Everything is float64 numpy. A "tensor" here is a plain ``np.ndarray``;
single samples are 1-d vectors, batches are 2-d ``(n, features)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionError, TrainingDivergedError, ValidationError

log = logging.getLogger(__name__)

ACTIVATIONS = ("identity", "relu")
READOUTS = ("logits", "softmax")


def as_tensor(x, name="x") -> np.ndarray:
    """Convert to a finite float64 array or raise."""
    arr = np.asarray(x, dtype=np.float64)
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # (n_out, n_in)
    biases: np.ndarray  # (n_out,)
    activation: str = "identity"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        b = np.asarray(self.biases, dtype=np.float64)
        if w.ndim != 2:
            raise DimensionError(f"weights must be 2-d, got shape {w.shape}")
        if b.shape != (w.shape[0],):
            raise DimensionError(
                f"bias shape {b.shape} does not match {w.shape[0]} output units"
            )
        if self.activation not in ACTIVATIONS:
            raise ValidationError(f"unknown activation {self.activation!r}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "biases", b)

    @property
    def n_in(self) -> int:
        return self.weights.shape[1]

    @property
    def n_out(self) -> int:
        return self.weights.shape[0]

    def preactivation(self, a: np.ndarray) -> np.ndarray:
        return a @ self.weights.T + self.biases

    def activate(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "relu":
            return np.maximum(z, 0.0)
        return z


@dataclass(frozen=True)
class LayeredNetwork:
    layers: tuple[DenseLayer, ...]
    readout: str = "logits"

    def __post_init__(self):
        layers = tuple(self.layers)
        if not layers:
            raise ValidationError("a network needs at least one layer")
        for k, (lo, hi) in enumerate(zip(layers, layers[1:])):
            if lo.n_out != hi.n_in:
                raise DimensionError(
                    f"layer {k} has {lo.n_out} outputs but layer {k + 1} "
                    f"expects {hi.n_in} inputs"
                )
        if self.readout not in READOUTS:
            raise ValidationError(f"unknown readout {self.readout!r}")
        object.__setattr__(self, "layers", layers)

    @property
    def input_dim(self) -> int:
        return self.layers[0].n_in

    @property
    def output_dim(self) -> int:
        return self.layers[-1].n_out

    def __call__(self, x) -> np.ndarray:
        return forward(self, x).output

    def logits(self, x) -> np.ndarray:
        return forward(self, x).logits

    def with_readout(self, readout: str) -> "LayeredNetwork":
        return LayeredNetwork(self.layers, readout)


@dataclass
class ActivationTrace:
    """Per-layer record of a forward pass.

    ``inputs[k]`` is what layer ``k`` consumed, ``pre[k]``/``post[k]`` its
    affine output before and after the activation.
    """

    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    post: list[np.ndarray]
    output: np.ndarray

    @property
    def logits(self) -> np.ndarray:
        return self.post[-1]


def identity_network(dim: int) -> LayeredNetwork:
    return LayeredNetwork((DenseLayer(np.eye(dim), np.zeros(dim)),))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def forward(net: LayeredNetwork, x) -> ActivationTrace:
    """Run ``x`` (one sample or a batch) through ``net``."""
    a = as_tensor(x)
    if a.shape[-1] != net.input_dim or a.ndim not in (1, 2):
        raise DimensionError(
            f"input of shape {a.shape} does not match input_dim {net.input_dim}"
        )
    inputs, pre, post = [], [], []
    for layer in net.layers:
        inputs.append(a)
        z = layer.preactivation(a)
        a = layer.activate(z)
        pre.append(z)
        post.append(a)
    out = softmax(a) if net.readout == "softmax" else a
    return ActivationTrace(inputs, pre, post, out)


def backward(net: LayeredNetwork, trace: ActivationTrace, grad_out: np.ndarray):
    """Backpropagate ``grad_out`` (gradient w.r.t. the logits).

    Returns ``(param_grads, grad_input)`` where ``param_grads`` is a list of
    ``(dW, db)`` pairs aligned with ``net.layers``. Works on batches; the
    caller is responsible for any averaging baked into ``grad_out``.
    """
    grads = [None] * len(net.layers)
    g = np.asarray(grad_out, dtype=np.float64)
    for k in range(len(net.layers) - 1, -1, -1):
        layer = net.layers[k]
        if layer.activation == "relu":
            g = g * (trace.pre[k] > 0)
        a_in = trace.inputs[k]
        if g.ndim == 1:
            dW = np.outer(g, a_in)
            db = g.copy()
        else:
            dW = g.T @ a_in
            db = g.sum(axis=0)
        grads[k] = (dW, db)
        g = g @ layer.weights
    return grads, g


def init_network(
    sizes: Sequence[int],
    seed: int,
    hidden_activation: str = "relu",
    output_activation: str = "identity",
    readout: str = "logits",
) -> LayeredNetwork:
    """Glorot-uniform weights, zero biases, seeded."""
    if len(sizes) < 2 or any(int(s) < 1 for s in sizes):
        raise ValidationError(f"invalid layer sizes {list(sizes)}")
    rng = np.random.default_rng(seed)
    layers = []
    n = len(sizes) - 1
    for k, (n_in, n_out) in enumerate(zip(sizes, sizes[1:])):
        bound = np.sqrt(6.0 / (n_in + n_out))
        w = rng.uniform(-bound, bound, size=(n_out, n_in))
        act = output_activation if k == n - 1 else hidden_activation
        layers.append(DenseLayer(w, np.zeros(n_out), act))
    return LayeredNetwork(tuple(layers), readout)


# -- losses ------------------------------------------------------------------


def cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean softmax cross-entropy and its gradient w.r.t. the logits."""
    logits = np.atleast_2d(logits)
    labels = np.asarray(labels, dtype=np.int64)
    n = logits.shape[0]
    shifted = logits - logits.max(axis=1, keepdims=True)
    logz = np.log(np.exp(shifted).sum(axis=1))
    logp = shifted - logz[:, None]
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    return loss, grad / n


# -- training ----------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    batch_size: int = 32
    epochs: int = 20
    seed: int = 0
    optimizer: str = "sgd-momentum"
    loss: str = "cross-entropy"
    momentum: float = 0.9
    # global-norm gradient clipping; None disables it
    clip_norm: float | None = None

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValidationError("learning_rate must be > 0")
        if self.epochs < 0:
            raise ValidationError("epochs must be >= 0")
        if self.batch_size < 1:
            raise ValidationError("batch_size must be >= 1")
        if self.optimizer not in ("sgd", "sgd-momentum"):
            raise ValidationError(f"unknown optimizer {self.optimizer!r}")
        if self.loss not in ("cross-entropy", "vae-elbo"):
            raise ValidationError(f"unknown loss {self.loss!r}")
        if self.clip_norm is not None and not self.clip_norm > 0:
            raise ValidationError("clip_norm must be > 0")


class SGD:
    """Plain or momentum SGD over a flat list of parameter arrays (in place)."""

    def __init__(self, params: list[np.ndarray], cfg: TrainConfig):
        self.params = params
        self.cfg = cfg
        self.velocity = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray]):
        if self.cfg.clip_norm is not None:
            norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads))
            if norm > self.cfg.clip_norm:
                grads = [g * (self.cfg.clip_norm / norm) for g in grads]
        lr = self.cfg.learning_rate
        for p, g, v in zip(self.params, grads, self.velocity):
            if self.cfg.optimizer == "sgd-momentum":
                v *= self.cfg.momentum
                v -= lr * g
                p += v
            else:
                p -= lr * g


def _unpack_params(net: LayeredNetwork) -> list[np.ndarray]:
    params = []
    for layer in net.layers:
        params.append(layer.weights.copy())
        params.append(layer.biases.copy())
    return params


def _pack_params(net: LayeredNetwork, params: list[np.ndarray], copy=True) -> LayeredNetwork:
    take = np.copy if copy else (lambda a: a)
    layers = tuple(
        DenseLayer(take(params[2 * k]), take(params[2 * k + 1]), layer.activation)
        for k, layer in enumerate(net.layers)
    )
    return LayeredNetwork(layers, net.readout)


def _flatten_grads(grads) -> list[np.ndarray]:
    return [g for pair in grads for g in pair]


def run_epochs(
    n_samples: int,
    cfg: TrainConfig,
    params: list[np.ndarray],
    batch_loss: Callable[[np.ndarray], tuple[float, list[np.ndarray]]],
) -> list[float]:
    """Generic minibatch loop. Returns the mean loss of every epoch.

    ``batch_loss(idx)`` evaluates the loss on the rows ``idx`` with the
    current ``params`` and returns ``(loss, grads)``.
    """
    rng = np.random.default_rng(cfg.seed)
    opt = SGD(params, cfg)
    history = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(n_samples)
        total = 0.0
        for start in range(0, n_samples, cfg.batch_size):
            idx = order[start:start + cfg.batch_size]
            loss, grads = batch_loss(idx)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch}, batch starting {start}"
                )
            total += loss * len(idx)
            opt.step(grads)
        history.append(total / n_samples)
        log.debug("epoch %d loss %.6f", epoch, history[-1])
    return history


def fit_classifier(
    net: LayeredNetwork, images, labels, cfg: TrainConfig
) -> tuple[LayeredNetwork, list[float]]:
    """Train ``net`` with softmax cross-entropy; returns (network, epoch losses)."""
    X = as_tensor(images, "images")
    y = np.asarray(labels, dtype=np.int64)
    if X.ndim != 2 or len(X) == 0:
        raise ValidationError("dataset is empty")
    if len(y) != len(X):
        raise ValidationError("labels and images differ in length")
    if y.min() < 0 or y.max() >= net.output_dim:
        raise ValidationError(f"labels must lie in [0, {net.output_dim})")
    if X.shape[1] != net.input_dim:
        raise DimensionError(
            f"images have {X.shape[1]} features, network expects {net.input_dim}"
        )
    params = _unpack_params(net)

    def batch_loss(idx):
        cur = _pack_params(net, params, copy=False)
        trace = forward(cur.with_readout("logits"), X[idx])
        loss, g = cross_entropy(trace.logits, y[idx])
        grads, _ = backward(cur, trace, g)
        return loss, _flatten_grads(grads)

    history = run_epochs(len(X), cfg, params, batch_loss)
    return _pack_params(net, params), history


def train_classifier(
    images, labels, arch: Sequence[int], cfg: TrainConfig
) -> LayeredNetwork:
    """Seeded init followed by SGD training; the result has a logits readout."""
    net = init_network(arch, cfg.seed)
    trained, _ = fit_classifier(net, images, labels, cfg)
    return trained


def accuracy(net: LayeredNetwork, images, labels) -> float:
    pred = np.argmax(net.logits(images), axis=-1)
    return float(np.mean(pred == np.asarray(labels)))
