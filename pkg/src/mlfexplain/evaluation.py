"""Region/latent flipping curves (MoRF), AOPC and baselines."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autoencoders import MlfAutoencoder
from .errors import ValidationError
from .gmlf import RelevanceReport
from .nn import LayeredNetwork, forward, softmax
from .segmentation import Partition, SegmentationHierarchy

FILLS = ("noise", "zeros", "mean")


def rng_for(seed: int, image_id: int = 0, trial: int = 0) -> np.random.Generator:
    """Independent stream per (global seed, image, trial)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(image_id), int(trial)]))


@dataclass
class MorfResult:
    scores: np.ndarray  # f(x^(0)) .. f(x^(L))
    ordering: np.ndarray
    target: int
    seed: int | None = None
    aopc: float = field(init=False)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.aopc = aopc(self.scores)

    @property
    def steps(self) -> int:
        return len(self.scores) - 1


def class_probability(model, x, target: int) -> np.ndarray:
    """Softmax probability of ``target`` regardless of the model's readout.

    ``model`` may also be a plain callable returning scores per row.
    """
    if isinstance(model, LayeredNetwork):
        return softmax(forward(model, x).logits)[..., target]
    return np.asarray(model(x), dtype=np.float64)


def predicted_class(model, x) -> int:
    if isinstance(model, LayeredNetwork):
        return int(np.argmax(forward(model, np.asarray(x).reshape(-1)).logits))
    return 0


def flip_order_hierarchical(hierarchy: SegmentationHierarchy, report: RelevanceReport) -> np.ndarray:
    """Finest-level region ids in depth-first order of descending relevance."""
    if len(report.levels) != hierarchy.depth:
        raise ValidationError("report and hierarchy have different depths")
    for k, (u, p) in enumerate(zip(report.levels, hierarchy.levels)):
        if len(u) != p.n_regions:
            raise ValidationError(f"level {k}: {len(u)} relevances for {p.n_regions} regions")
    out: list[int] = []

    def visit(level: int, ids: np.ndarray):
        u = report.levels[level][ids]
        for r in ids[np.argsort(-u, kind="stable")]:
            if level == hierarchy.depth - 1:
                out.append(int(r))
            else:
                visit(level + 1, hierarchy.children(level, int(r)))

    visit(0, np.arange(hierarchy.levels[0].n_regions))
    return np.asarray(out, dtype=np.int64)


def _as_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def segment_perturber(image, partition: Partition, ordering, fill: str = "noise",
                      seed=0, value_range=(0.0, 1.0)) -> Callable[[int], np.ndarray]:
    """``k -> image`` with the first ``k`` regions of ``ordering`` overwritten.

    Noise is drawn once (seeded uniform over ``value_range``), so successive
    steps only add regions to an otherwise identical perturbation.
    """
    img = np.asarray(image, dtype=np.float64)
    if fill not in FILLS:
        raise ValidationError(f"unknown fill {fill!r}")
    order = np.asarray(ordering, dtype=np.int64)
    if fill == "noise":
        lo, hi = value_range
        source = _as_rng(seed).uniform(lo, hi, size=img.shape)
    elif fill == "zeros":
        source = np.zeros_like(img)
    else:
        source = np.full_like(img, img.mean())
    region_rank = np.full(partition.n_regions, partition.n_regions, dtype=np.int64)
    region_rank[order] = np.arange(len(order))
    pixel_rank = region_rank[partition.labels].reshape(partition.shape)

    def perturb(k: int) -> np.ndarray:
        if not 0 <= k <= min(len(order), partition.n_regions):
            raise ValidationError(f"k must lie in [0, {len(order)}], got {k}")
        mask = pixel_rank < k
        return np.where(mask if img.ndim == 2 else mask[:, :, None], source, img)

    return perturb


def perturb_segments(image, partition: Partition, ordering, k: int, fill: str = "noise",
                     seed=0, value_range=(0.0, 1.0)) -> np.ndarray:
    return segment_perturber(image, partition, ordering, fill, seed, value_range)(k)


def latent_perturber(ae: MlfAutoencoder, h, ordering, seed=0) -> Callable[[int], np.ndarray]:
    """``k -> classifier input`` after replacing the first ``k`` latents of
    ``ordering`` with one seeded draw from the N(0, 1) prior."""
    if ae.kind != "vae":
        raise ValidationError("latent perturbation needs a VAE autoencoder")
    h = np.asarray(h, dtype=np.float64)
    order = np.asarray(ordering, dtype=np.int64)
    prior = _as_rng(seed).standard_normal(len(h))

    def perturb(k: int) -> np.ndarray:
        if not 0 <= k <= len(order):
            raise ValidationError(f"k must lie in [0, {len(order)}], got {k}")
        if k == 0:
            return forward(ae.decoder, h).output + ae.residual
        hk = h.copy()
        hk[order[:k]] = prior[order[:k]]
        return forward(ae.decoder, hk).output + ae.residual

    return perturb


def perturb_latents(ae: MlfAutoencoder, h, ordering, k: int, seed=0) -> np.ndarray:
    return latent_perturber(ae, h, ordering, seed)(k)


def morf_curve(model, image, perturb: Callable[[int], np.ndarray], steps: int,
               target: int | None = None, ordering=None, seed=None) -> MorfResult:
    """Scores of the originally predicted class along ``perturb(0..steps)``."""
    x0 = np.asarray(image, dtype=np.float64).reshape(-1)
    if target is None:
        target = predicted_class(model, x0)
    batch = np.stack([np.asarray(perturb(k), dtype=np.float64).reshape(-1)
                      for k in range(steps + 1)])
    scores = class_probability(model, batch, target)
    order = np.asarray(ordering if ordering is not None else [], dtype=np.int64)
    return MorfResult(scores, order, target, seed)


def aopc(scores) -> float:
    s = np.asarray(scores, dtype=np.float64)
    if s.size == 0:
        raise ValidationError("scores must be nonempty")
    return float(np.sum(s[0] - s) / len(s))


def aopc_series(scores) -> np.ndarray:
    """AOPC of every prefix of a curve: entry ``l`` uses steps 0..l."""
    s = np.asarray(scores, dtype=np.float64)
    return np.cumsum(s[..., :1] - s, axis=-1) / np.arange(1, s.shape[-1] + 1)


@dataclass
class AopcSummary:
    mean_curve: np.ndarray
    aopc_per_step: np.ndarray
    n_images: int

    @property
    def aopc(self) -> float:
        return float(self.aopc_per_step[-1])


def aopc_mean(results: Sequence[MorfResult]) -> AopcSummary:
    if not results:
        raise ValidationError("no results to average")
    lengths = {len(r.scores) for r in results}
    if len(lengths) != 1:
        raise ValidationError(f"results have different step counts: {sorted(lengths)}")
    curves = np.stack([r.scores for r in results])
    return AopcSummary(curves.mean(axis=0), aopc_series(curves).mean(axis=0), len(results))


def random_baseline(model, image, n_units: int, make_perturb, steps: int,
                    trials: int = 10, seed: int = 0, image_id: int = 0) -> MorfResult:
    """Mean MoRF curve over ``trials`` random orderings of ``n_units`` MLFs.

    ``make_perturb(ordering, rng)`` must return the ``k -> input`` function
    for that ordering.
    """
    if trials < 1:
        raise ValidationError("trials must be >= 1")
    x0 = np.asarray(image, dtype=np.float64).reshape(-1)
    target = predicted_class(model, x0)
    curves = []
    for t in range(trials):
        rng = rng_for(seed, image_id, t)
        order = rng.permutation(n_units)
        res = morf_curve(model, x0, make_perturb(order, rng), steps, target, order)
        curves.append(res.scores)
    return MorfResult(np.mean(curves, axis=0), np.zeros(0, dtype=np.int64), target, seed)
