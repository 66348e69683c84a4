"""Layer-wise relevance propagation with the alpha-beta rule.

For a dense layer with inputs ``a`` and weights ``W`` the contributions are
``z[j, i] = a[i] * W[j, i]``. Each output unit ``j`` splits its relevance
between a positive pool (``z > 0`` plus a positive bias) and a negative pool
(``z < 0`` plus a negative bias):

    R_i = sum_j (alpha * z+_ji / (P_j + eps) - beta * z-_ji / (N_j - eps)) R_j

Biases only enter the denominators, so whatever share they claim is
dropped. When one pool of a unit is empty its whole relevance goes through
the other pool (coefficient 1), which keeps the layer conservative; when
both are empty the unit's relevance is dropped and counted.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionError, ValidationError
from .nn import ActivationTrace, DenseLayer, LayeredNetwork, as_tensor, forward

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LrpConfig:
    alpha: float = 1.0
    beta: float = 0.0
    epsilon: float = 1e-9

    def __post_init__(self):
        if abs((self.alpha - self.beta) - 1.0) > 1e-12:
            raise ValidationError(
                f"alpha - beta must equal 1 (got alpha={self.alpha}, beta={self.beta})"
            )
        if self.beta < 0:
            raise ValidationError("beta must be >= 0")
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be > 0")

    @classmethod
    def from_alpha(cls, alpha: float, epsilon: float = 1e-9) -> "LrpConfig":
        return cls(alpha, alpha - 1.0, epsilon)


@dataclass
class RelevanceTrace:
    """``relevances[k]`` is the relevance at the input of layer ``k``."""

    relevances: list[np.ndarray]
    output: np.ndarray
    target: int
    dropped_units: int = 0
    layer_sums: list[float] = field(default_factory=list)

    @property
    def input_relevance(self) -> np.ndarray:
        return self.relevances[0]


def init_relevance(logits, target: int | None = None) -> np.ndarray:
    """One-hot at ``target`` (argmax by default) scaled by that logit."""
    z = as_tensor(logits, "logits")
    if z.ndim != 1:
        raise DimensionError("init_relevance expects a single logit vector")
    if target is None:
        target = int(np.argmax(z))
    if not 0 <= target < len(z):
        raise ValidationError(f"target class {target} out of range [0, {len(z)})")
    out = np.zeros_like(z)
    out[target] = z[target]
    return out


def _lrp_dense(layer: DenseLayer, a: np.ndarray, r_out: np.ndarray, cfg: LrpConfig,
               extra_bias: np.ndarray | None = None):
    b = layer.biases if extra_bias is None else layer.biases + extra_bias
    z = layer.weights * a[None, :]
    zp = np.maximum(z, 0.0)
    zn = np.minimum(z, 0.0)
    pos = zp.sum(axis=1) + np.maximum(b, 0.0)
    neg = zn.sum(axis=1) + np.minimum(b, 0.0)
    has_p = pos > 0
    has_n = neg < 0
    cp = np.where(has_n, cfg.alpha, 1.0)
    cn = np.where(has_p, cfg.beta, -1.0)
    degenerate = ~has_p & ~has_n & (r_out != 0)
    r = np.where(degenerate, 0.0, r_out)
    sp = np.where(has_p, cp * r / (pos + cfg.epsilon), 0.0)
    sn = np.where(has_n, cn * r / (neg - cfg.epsilon), 0.0)
    r_in = sp @ zp - sn @ zn
    return r_in, int(degenerate.sum())


def lrp_linear(layer: DenseLayer, in_acts, out_rel, cfg: LrpConfig | None = None) -> np.ndarray:
    """Redistribute ``out_rel`` over the inputs of one dense layer."""
    cfg = cfg or LrpConfig()
    a = as_tensor(in_acts, "in_acts")
    r = as_tensor(out_rel, "out_rel")
    if a.shape != (layer.n_in,) or r.shape != (layer.n_out,):
        raise DimensionError(
            f"layer is {layer.n_out}x{layer.n_in}; got activations {a.shape} "
            f"and relevance {r.shape}"
        )
    r_in, dropped = _lrp_dense(layer, a, r, cfg)
    if dropped:
        log.warning("lrp_linear: dropped relevance of %d degenerate unit(s)", dropped)
    return r_in


def lrp_propagate(
    net: LayeredNetwork,
    x,
    cfg: LrpConfig | None = None,
    target: int | None = None,
    trace: ActivationTrace | None = None,
    junction_bias: dict[int, np.ndarray] | None = None,
) -> RelevanceTrace:
    """Backward pass from the (pre-softmax) logits of ``net`` down to ``x``.

    ``trace`` may carry a precomputed forward pass; ``junction_bias`` maps a
    layer index to an extra bias that LRP treats like the layer's own bias
    (used for the residual injected between decoder and classifier).
    """
    cfg = cfg or LrpConfig()
    x = as_tensor(x)
    if x.shape != (net.input_dim,):
        raise DimensionError(
            f"x has shape {x.shape}, network expects ({net.input_dim},)"
        )
    if trace is None:
        trace = forward(net, x)
    junction_bias = junction_bias or {}
    tgt = int(np.argmax(trace.logits)) if target is None else int(target)
    r = init_relevance(trace.logits, tgt)
    out = r
    rels: list[np.ndarray] = [None] * len(net.layers)
    sums = [float(r.sum())]
    dropped = 0
    for k in range(len(net.layers) - 1, -1, -1):
        r, d = _lrp_dense(net.layers[k], trace.inputs[k], r, cfg, junction_bias.get(k))
        dropped += d
        rels[k] = r
        sums.append(float(r.sum()))
    if dropped:
        log.warning("lrp_propagate: dropped relevance of %d degenerate unit(s)", dropped)
    return RelevanceTrace(rels, out, tgt, dropped, sums[::-1])
