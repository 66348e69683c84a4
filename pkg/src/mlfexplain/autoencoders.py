"""Encoder/decoder pairs whose latent units are middle-level features.

Three kinds are supported:

* ``flat-seg`` / ``hier-seg``: the decoder is a stack of 0/1 containment
  matrices ending in a layer whose columns are the finest regions' pixel
  values, so feeding the all-ones code reproduces the image exactly.
* ``vae``: a trained dense VAE; the code is the posterior mean and a
  bias-only residual restores whatever the decoder fails to reconstruct.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionError, HierarchyError, ValidationError
from .modelio import load_networks, save_networks
from .nn import (
    DenseLayer,
    LayeredNetwork,
    TrainConfig,
    _flatten_grads,
    _pack_params,
    _unpack_params,
    as_tensor,
    backward,
    forward,
    init_network,
    run_epochs,
)
from .segmentation import SegmentationHierarchy, check_refinement

KINDS = ("flat-seg", "hier-seg", "vae")
LOGVAR_MIN, LOGVAR_MAX = -10.0, 10.0


@dataclass(frozen=True)
class MlfAutoencoder:
    """Per-input autoencoder. ``encoding`` is the code of the image it was built for."""

    kind: str
    decoder: LayeredNetwork
    residual: np.ndarray
    encoding: np.ndarray
    hierarchy: SegmentationHierarchy | None = None
    vae: "VaeModel | None" = None
    catalog: tuple[str, ...] = ()

    def encode(self, x=None) -> np.ndarray:
        if self.kind == "vae" and x is not None:
            return vae_encode(self.vae, x)[0]
        return self.encoding.copy()

    def decode(self, h, with_residual: bool = True) -> np.ndarray:
        out = forward(self.decoder, h).output
        return out + self.residual if with_residual else out

    @property
    def latent_dim(self) -> int:
        return self.decoder.input_dim

    @property
    def level_sizes(self) -> list[int]:
        """Unit count at the input of each decoder layer that carries MLFs."""
        if self.kind == "vae":
            return [self.latent_dim]
        return [p.n_regions for p in self.hierarchy.levels]


def build_residual_layer(x, decoder: LayeredNetwork, h) -> np.ndarray:
    """Bias of the zero-weight residual layer: ``x - decoder(h)``."""
    x = as_tensor(x)
    if decoder.output_dim != x.size:
        raise DimensionError(
            f"decoder emits {decoder.output_dim} values, input has {x.size}"
        )
    return x.reshape(-1) - forward(decoder, h).output


def residual_as_layer(residual: np.ndarray) -> DenseLayer:
    d = len(residual)
    return DenseLayer(np.zeros((d, d)), residual, "identity")


def segmentation_decoder(image, hierarchy: SegmentationHierarchy) -> LayeredNetwork:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    h, w, ch = img.shape
    if hierarchy.shape != (h, w):
        raise HierarchyError(
            f"hierarchy covers {hierarchy.shape} pixels, image is {(h, w)}"
        )
    ok, bad = check_refinement(hierarchy)
    if not ok:
        raise HierarchyError(f"hierarchy violates refinement at level/region {bad}")
    layers = []
    for k in range(hierarchy.depth - 1):
        coarse, fine = hierarchy.levels[k], hierarchy.levels[k + 1]
        contain = np.zeros((fine.n_regions, coarse.n_regions))
        contain[np.arange(fine.n_regions), hierarchy.parents[k]] = 1.0
        layers.append(DenseLayer(contain, np.zeros(fine.n_regions)))
    finest = hierarchy.levels[-1]
    d = h * w * ch
    last = np.zeros((d, finest.n_regions))
    pixel_region = np.repeat(finest.labels, ch)
    last[np.arange(d), pixel_region] = img.reshape(-1)
    layers.append(DenseLayer(last, np.zeros(d)))
    return LayeredNetwork(tuple(layers))


def build_segmentation_autoencoder(image, hierarchy: SegmentationHierarchy) -> MlfAutoencoder:
    decoder = segmentation_decoder(image, hierarchy)
    h = np.ones(hierarchy.levels[0].n_regions)
    residual = build_residual_layer(np.asarray(image, dtype=np.float64), decoder, h)
    kind = "flat-seg" if hierarchy.depth == 1 else "hier-seg"
    catalog = tuple(
        f"level{k}/region{r}"
        for k, p in enumerate(hierarchy.levels)
        for r in range(p.n_regions)
    )
    return MlfAutoencoder(kind, decoder, residual, h, hierarchy=hierarchy, catalog=catalog)


# -- VAE -----------------------------------------------------------------------


@dataclass(frozen=True)
class VaeModel:
    encoder: LayeredNetwork  # x -> [mu, logvar]
    decoder: LayeredNetwork  # z -> x_hat
    beta: float = 4.0
    # per-latent std of mu over the training set (traversal ranges)
    latent_std: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.encoder.output_dim % 2:
            raise DimensionError("encoder must emit [mu, logvar] of equal length")
        m = self.encoder.output_dim // 2
        if self.decoder.input_dim != m:
            raise DimensionError(
                f"decoder takes {self.decoder.input_dim} latents, encoder gives {m}"
            )
        if self.decoder.output_dim != self.encoder.input_dim:
            raise DimensionError("decoder output must match encoder input")

    @property
    def latent_dim(self) -> int:
        return self.encoder.output_dim // 2

    @property
    def input_dim(self) -> int:
        return self.encoder.input_dim


def vae_encode(vae: VaeModel, x) -> tuple[np.ndarray, np.ndarray]:
    x = as_tensor(x)
    out = forward(vae.encoder, x if x.ndim == 2 else x.reshape(-1)).output
    m = vae.latent_dim
    return out[..., :m], out[..., m:]


def vae_sample(mu, logvar, seed=None, eps=None) -> np.ndarray:
    """Reparameterised draw; log-variance is clamped to [-10, 10]."""
    mu = as_tensor(mu, "mu")
    lv = np.clip(np.asarray(logvar, dtype=np.float64), LOGVAR_MIN, LOGVAR_MAX)
    if mu.shape != lv.shape:
        raise DimensionError("mu and logvar differ in shape")
    if eps is None:
        eps = np.random.default_rng(seed).standard_normal(mu.shape)
    return mu + np.exp(0.5 * lv) * eps


def kl_divergence(mu, logvar) -> np.ndarray:
    """KL(N(mu, exp(logvar)) || N(0, 1)), summed over the last axis."""
    mu = np.asarray(mu, dtype=np.float64)
    lv = np.asarray(logvar, dtype=np.float64)
    return -0.5 * np.sum(1.0 + lv - mu ** 2 - np.exp(lv), axis=-1)


def vae_loss(x, x_hat, mu, logvar, beta: float) -> float:
    """Summed squared reconstruction error plus ``beta`` times the KL term.

    Batches are averaged over samples.
    """
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    recon = np.sum((np.asarray(x) - np.asarray(x_hat)) ** 2, axis=-1)
    return float(np.mean(recon + beta * kl_divergence(mu, logvar)))


def vae_loss_and_grads(vae: VaeModel, X: np.ndarray, eps: np.ndarray):
    """ELBO loss on batch ``X`` with fixed noise ``eps`` and parameter grads.

    Returns ``(loss, encoder_grads, decoder_grads, mean_reconstruction)``;
    gradients use the ``(dW, db)`` per-layer layout of :func:`backward`.
    """
    n = X.shape[0]
    m = vae.latent_dim
    enc_trace = forward(vae.encoder, X)
    mu, raw_lv = enc_trace.output[:, :m], enc_trace.output[:, m:]
    lv = np.clip(raw_lv, LOGVAR_MIN, LOGVAR_MAX)
    std = np.exp(0.5 * lv)
    z = mu + std * eps
    dec_trace = forward(vae.decoder, z)
    x_hat = dec_trace.output
    diff = x_hat - X
    recon = np.sum(diff ** 2, axis=1)
    kl = kl_divergence(mu, lv)
    loss = float(np.mean(recon + vae.beta * kl))

    g_xhat = 2.0 * diff / n
    dec_grads, g_z = backward(vae.decoder, dec_trace, g_xhat)
    g_mu = g_z + vae.beta * mu / n
    g_lv = g_z * eps * 0.5 * std + vae.beta * 0.5 * (np.exp(lv) - 1.0) / n
    g_lv = g_lv * ((raw_lv > LOGVAR_MIN) & (raw_lv < LOGVAR_MAX))
    enc_grads, _ = backward(vae.encoder, enc_trace, np.concatenate([g_mu, g_lv], axis=1))
    return loss, enc_grads, dec_grads, float(np.mean(recon))


def init_vae(input_dim: int, latent_dim: int = 10, hidden=(256, 64),
             beta: float = 4.0, seed: int = 0) -> VaeModel:
    hidden = list(hidden)
    enc = init_network([input_dim, *hidden, 2 * latent_dim], seed)
    dec = init_network([latent_dim, *hidden[::-1], input_dim], seed + 1)
    return VaeModel(enc, dec, beta)


def train_vae(images, latent_dim: int = 10, beta: float = 4.0, cfg: TrainConfig | None = None,
              hidden: Sequence[int] = (256, 64), history: list | None = None,
              warmup_epochs: int = 0) -> VaeModel:
    """Train a dense VAE on flattened ``images`` (rows).

    The KL weight ramps linearly from 0 to ``beta`` over ``warmup_epochs``.
    ``history`` (if given) receives ``(epoch_loss, epoch_reconstruction)``
    tuples measured on the minibatches as training proceeds.
    """
    cfg = cfg or TrainConfig(learning_rate=1e-3, loss="vae-elbo", clip_norm=10.0)
    X = as_tensor(images, "images")
    if X.ndim != 2 or len(X) == 0:
        raise ValidationError("dataset is empty")
    if beta < 0:
        raise ValidationError("beta must be >= 0")
    vae = init_vae(X.shape[1], latent_dim, hidden, beta, cfg.seed)
    enc_params = _unpack_params(vae.encoder)
    dec_params = _unpack_params(vae.decoder)
    params = enc_params + dec_params
    n_enc = len(enc_params)
    noise = np.random.default_rng([cfg.seed, 1])
    recon_acc = []
    per_epoch = -(-len(X) // cfg.batch_size)
    ramp = max(warmup_epochs, 0) * per_epoch

    def batch_loss(idx):
        step = len(recon_acc)
        cur = VaeModel(
            _pack_params(vae.encoder, params[:n_enc], copy=False),
            _pack_params(vae.decoder, params[n_enc:], copy=False),
            beta * min(1.0, (step + 1) / ramp) if ramp else beta,
        )
        eps = noise.standard_normal((len(idx), latent_dim))
        loss, eg, dg, recon = vae_loss_and_grads(cur, X[idx], eps)
        recon_acc.append((len(idx), recon))
        return loss, _flatten_grads(eg) + _flatten_grads(dg)

    losses = run_epochs(len(X), cfg, params, batch_loss)
    if history is not None:
        for e, loss in enumerate(losses):
            chunk = recon_acc[e * per_epoch:(e + 1) * per_epoch]
            total = sum(c * r for c, r in chunk) / sum(c for c, _ in chunk)
            history.append((loss, total))
    enc = _pack_params(vae.encoder, params[:n_enc])
    dec = _pack_params(vae.decoder, params[n_enc:])
    mu, _ = vae_encode(VaeModel(enc, dec, beta), X)
    return VaeModel(enc, dec, beta, latent_std=mu.std(axis=0))


def reconstruction_error(vae: VaeModel, images) -> float:
    """Mean summed squared error of the deterministic (posterior-mean) decode."""
    X = as_tensor(images)
    mu, _ = vae_encode(vae, X)
    return float(np.mean(np.sum((forward(vae.decoder, mu).output - X) ** 2, axis=1)))


def build_vae_autoencoder(vae: VaeModel, x) -> MlfAutoencoder:
    x = as_tensor(x).reshape(-1)
    if x.size != vae.input_dim:
        raise DimensionError(f"image has {x.size} values, VAE expects {vae.input_dim}")
    mu, _ = vae_encode(vae, x)
    residual = build_residual_layer(x, vae.decoder, mu)
    catalog = tuple(f"latent{i}" for i in range(vae.latent_dim))
    return MlfAutoencoder("vae", vae.decoder, residual, mu, vae=vae, catalog=catalog)


def save_vae(path, vae: VaeModel):
    extra = {"vae": {"latent_dim": vae.latent_dim, "beta": float(vae.beta)}}
    if vae.latent_std is not None:
        extra["vae"]["latent_std"] = [float(s) for s in vae.latent_std]
    return save_networks(path, {"encoder": vae.encoder, "decoder": vae.decoder}, extra)


def load_vae(path) -> VaeModel:
    nets, manifest = load_networks(path)
    meta = manifest.get("vae")
    if meta is None or "encoder" not in nets or "decoder" not in nets:
        raise ValidationError(f"{path} is not a VAE model file")
    std = meta.get("latent_std")
    vae = VaeModel(nets["encoder"], nets["decoder"], float(meta["beta"]),
                   None if std is None else np.asarray(std, dtype=np.float64))
    if vae.latent_dim != int(meta["latent_dim"]):
        raise ValidationError("latent_dim in manifest disagrees with the networks")
    return vae
