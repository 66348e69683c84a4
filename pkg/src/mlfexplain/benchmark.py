"""Run several explainers through MoRF on a set of images.

All segment explainers share one segmentation per image: the finest level of
the automatic hierarchy, which is also the flat partition used by the flat
GMLF explainer and LIME.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .autoencoders import VaeModel, build_segmentation_autoencoder, build_vae_autoencoder
from .errors import ValidationError
from .evaluation import (
    AopcSummary,
    MorfResult,
    aopc_mean,
    flip_order_hierarchical,
    latent_perturber,
    morf_curve,
    random_baseline,
    rng_for,
    segment_perturber,
)
from .gmlf import explain
from .lime import lime_explain
from .lrp import LrpConfig
from .nn import LayeredNetwork
from .segmentation import DEFAULT_QUANTILES, auto_segment, finest_as_flat

log = logging.getLogger(__name__)

SEGMENT_EXPLAINERS = ("gmlf-flat", "gmlf-hier", "lime", "random")
LATENT_EXPLAINERS = ("gmlf-vae", "random-vae")
EXPLAINERS = SEGMENT_EXPLAINERS + LATENT_EXPLAINERS


@dataclass(frozen=True)
class EvalConfig:
    steps: int = 6
    trials: int = 10
    seed: int = 0
    fill: str = "noise"
    quantiles: tuple[float, ...] = DEFAULT_QUANTILES
    min_size: int = 16
    lrp: LrpConfig = field(default_factory=LrpConfig)
    lime_samples: int = 1000
    lime_kernel_width: float = 0.25
    lime_ridge: float = 1.0


@dataclass
class EvalRun:
    explainers: tuple[str, ...]
    results: dict[str, list[MorfResult]]
    image_ids: list[int]
    skipped: list[int]

    def summary(self) -> dict[str, AopcSummary]:
        return {name: aopc_mean(res) for name, res in self.results.items() if res}

    def aopcs(self, name: str) -> np.ndarray:
        return np.array([r.aopc for r in self.results[name]])


def evaluate_image(model: LayeredNetwork, image, image_id: int, explainers: Sequence[str],
                   cfg: EvalConfig, vae: VaeModel | None = None) -> dict[str, MorfResult] | None:
    """MoRF results for one image, or ``None`` if it has too few MLFs."""
    img = np.asarray(image, dtype=np.float64)
    x = img.reshape(-1)
    out: dict[str, MorfResult] = {}
    L = cfg.steps
    if any(e in SEGMENT_EXPLAINERS for e in explainers):
        hierarchy = auto_segment(img, cfg.quantiles, cfg.min_size)
        finest = hierarchy.levels[-1]
        if finest.n_regions < L:
            return None
        flat = finest_as_flat(hierarchy)

        def seg_run(order, rng):
            return segment_perturber(img, finest, order, cfg.fill, rng)

        if "gmlf-flat" in explainers:
            rep = explain(model, x, build_segmentation_autoencoder(img, flat), cfg.lrp)
            order = rep.ranking()
            out["gmlf-flat"] = morf_curve(model, x, seg_run(order, rng_for(cfg.seed, image_id)),
                                          L, ordering=order, seed=cfg.seed)
        if "gmlf-hier" in explainers:
            rep = explain(model, x, build_segmentation_autoencoder(img, hierarchy), cfg.lrp)
            order = flip_order_hierarchical(hierarchy, rep)
            out["gmlf-hier"] = morf_curve(model, x, seg_run(order, rng_for(cfg.seed, image_id)),
                                          L, ordering=order, seed=cfg.seed)
        if "lime" in explainers:
            lime = lime_explain(model, img, finest, cfg.lime_samples, cfg.lime_kernel_width,
                                cfg.lime_ridge, seed=int(rng_for(cfg.seed, image_id, 1).integers(2**31)))
            order = lime.ranking()
            out["lime"] = morf_curve(model, x, seg_run(order, rng_for(cfg.seed, image_id)),
                                     L, ordering=order, seed=cfg.seed)
        if "random" in explainers:
            out["random"] = random_baseline(model, x, finest.n_regions, seg_run, L,
                                            cfg.trials, cfg.seed, image_id)
    if any(e in LATENT_EXPLAINERS for e in explainers):
        if vae is None:
            raise ValidationError("latent explainers need a trained VAE")
        if vae.latent_dim < L:
            raise ValidationError(f"steps={L} exceeds the VAE's {vae.latent_dim} latents")
        ae = build_vae_autoencoder(vae, x)
        h = ae.encode()

        def lat_run(order, rng):
            return latent_perturber(ae, h, order, rng)

        if "gmlf-vae" in explainers:
            rep = explain(model, x, ae, cfg.lrp)
            order = rep.ranking()
            out["gmlf-vae"] = morf_curve(model, x, lat_run(order, rng_for(cfg.seed, image_id)),
                                         L, ordering=order, seed=cfg.seed)
        if "random-vae" in explainers:
            out["random-vae"] = random_baseline(model, x, vae.latent_dim, lat_run, L,
                                                cfg.trials, cfg.seed, image_id)
    return out


def run_evaluation(model: LayeredNetwork, images, explainers: Sequence[str],
                   cfg: EvalConfig | None = None, vae: VaeModel | None = None,
                   image_ids: Sequence[int] | None = None) -> EvalRun:
    cfg = cfg or EvalConfig()
    unknown = [e for e in explainers if e not in EXPLAINERS]
    if unknown:
        raise ValidationError(f"unknown explainer(s) {unknown}; choose from {EXPLAINERS}")
    if cfg.steps < 0 or cfg.trials < 1:
        raise ValidationError("steps must be >= 0 and trials >= 1")
    ids = list(range(len(images))) if image_ids is None else list(image_ids)
    results: dict[str, list[MorfResult]] = {e: [] for e in explainers}
    kept, skipped = [], []
    for image_id, img in zip(ids, images):
        res = evaluate_image(model, img, image_id, explainers, cfg, vae)
        if res is None:
            log.info("image %d has fewer than %d regions; skipped", image_id, cfg.steps)
            skipped.append(image_id)
            continue
        kept.append(image_id)
        for name, r in res.items():
            results[name].append(r)
    return EvalRun(tuple(explainers), results, kept, skipped)
