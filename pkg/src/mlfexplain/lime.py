"""Superpixel surrogate baseline in the style of LIME.

Random binary masks switch segments on or off, the masked images are scored
by the model and a weighted ridge regression of the scores on the masks
gives one weight per segment. Samples are weighted by
``exp(-(1 - s)^2 / width^2)`` with ``s`` the fraction of segments kept.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SingularDesignError, ValidationError
from .evaluation import class_probability, predicted_class
from .segmentation import Partition

MAX_ATTEMPTS = 3


@dataclass(frozen=True)
class LimeExplanation:
    weights: np.ndarray
    intercept: float
    n_samples: int
    kernel_width: float
    ridge: float
    seed: int
    target: int

    def ranking(self) -> np.ndarray:
        return np.argsort(-self.weights, kind="stable")


def masked_images(image, partition: Partition, masks: np.ndarray, fill: str = "zeros") -> np.ndarray:
    """Rows of flattened images where ``mask == 0`` segments are replaced."""
    img = np.asarray(image, dtype=np.float64)
    if fill == "zeros":
        base = np.zeros_like(img)
    elif fill == "mean":
        base = np.full_like(img, img.mean())
    else:
        raise ValidationError(f"unknown fill {fill!r}")
    keep = masks[:, partition.labels].astype(bool)  # (n, pixels)
    if img.ndim == 3:
        keep = np.repeat(keep, img.shape[2], axis=1)
    return np.where(keep, img.reshape(1, -1), base.reshape(1, -1))


def fit_weighted_ridge(X: np.ndarray, y: np.ndarray, w: np.ndarray, ridge: float):
    """Weighted ridge with an unpenalised intercept; returns (coef, intercept)."""
    sw = w / w.sum()
    x_mean = sw @ X
    y_mean = sw @ y
    Xc = X - x_mean
    yc = y - y_mean
    A = Xc.T @ (Xc * w[:, None]) + ridge * np.eye(X.shape[1])
    b = Xc.T @ (w * yc)
    coef = np.linalg.solve(A, b)
    return coef, float(y_mean - x_mean @ coef)


def _design_is_degenerate(masks: np.ndarray, weights: np.ndarray) -> bool:
    """True when every mask that carries weight is the same mask."""
    live = masks[weights > 0]
    return len(live) < 2 or bool(np.all(live == live[0]))


def lime_explain(model, image, partition: Partition, n_samples: int = 1000,
                 kernel_width: float = 0.25, ridge: float = 1.0, seed: int = 0,
                 fill: str = "zeros", target: int | None = None,
                 masks: np.ndarray | None = None) -> LimeExplanation:
    """Fit the surrogate; ``masks`` overrides random sampling (e.g. exhaustive)."""
    m = partition.n_regions
    if masks is None and n_samples < m + 1:
        raise ValidationError(f"n_samples must be >= {m + 1}")
    if kernel_width <= 0 or ridge < 0:
        raise ValidationError("kernel_width must be > 0 and ridge >= 0")
    x0 = np.asarray(image, dtype=np.float64)
    if target is None:
        target = predicted_class(model, x0)
    rng = np.random.default_rng(seed)
    for attempt in range(MAX_ATTEMPTS):
        if masks is not None and attempt == 0:
            Z = np.asarray(masks, dtype=np.float64)
        else:
            Z = rng.integers(0, 2, size=(n_samples, m)).astype(np.float64)
            Z[0] = 1.0
            if attempt > 0:
                flips = rng.random(Z.shape) < 0.05
                Z = np.where(flips, 1.0 - Z, Z)
        kept = Z.mean(axis=1)
        w = np.exp(-((1.0 - kept) ** 2) / kernel_width ** 2)
        if _design_is_degenerate(Z, w):
            continue
        y = class_probability(model, masked_images(x0, partition, Z, fill), target)
        try:
            coef, intercept = fit_weighted_ridge(Z, y, w, ridge)
        except np.linalg.LinAlgError:
            continue
        return LimeExplanation(coef, intercept, len(Z), kernel_width, ridge, seed, int(target))
    raise SingularDesignError(f"surrogate design stayed singular after {MAX_ATTEMPTS} attempts")
