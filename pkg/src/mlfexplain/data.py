"""Synthetic shape images and on-disk labelled image folders."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .pnm import quantize, read_pnm, write_pnm

SHAPES = ("square", "disk", "triangle")


@dataclass
class Dataset:
    images: np.ndarray  # (n, h, w) or (n, h, w, ch)
    labels: np.ndarray
    names: list[str]

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def flat(self) -> np.ndarray:
        return self.images.reshape(len(self.images), -1)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1

    def split(self, fraction: float, seed: int = 0) -> tuple["Dataset", "Dataset"]:
        """Deterministic shuffled split; the second part holds ``fraction``."""
        order = np.random.default_rng(seed).permutation(len(self))
        cut = len(self) - int(round(fraction * len(self)))
        a, b = order[:cut], order[cut:]
        return self.subset(a), self.subset(b)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return Dataset(self.images[idx], self.labels[idx], [self.names[i] for i in idx])


def _shape_mask(kind: str, size: int, cy: float, cx: float, r: float) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size] + 0.5
    if kind == "square":
        return (np.abs(yy - cy) <= r) & (np.abs(xx - cx) <= r)
    if kind == "disk":
        return (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
    if kind == "triangle":
        # apex up, base 2r at cy + r
        top, bottom = cy - r, cy + r
        half = (yy - top) / (2 * r) * r
        return (yy >= top) & (yy <= bottom) & (np.abs(xx - cx) <= half)
    raise ValidationError(f"unknown shape {kind!r}")


def render_shape(kind: str, rng: np.random.Generator, size: int = 24, noise: float = 0.05,
                 channels: int = 1) -> np.ndarray:
    r = rng.uniform(0.2 * size, 0.33 * size)
    cy = rng.uniform(r + 1, size - r - 1)
    cx = rng.uniform(r + 1, size - r - 1)
    mask = _shape_mask(kind, size, cy, cx, r)
    if channels == 1:
        bg = rng.uniform(0.0, 0.3)
        fg = rng.uniform(0.6, 1.0)
        img = np.where(mask, fg, bg)
        shape = (size, size)
    else:
        bg = rng.uniform(0.0, 0.3, size=channels)
        fg = rng.uniform(0.6, 1.0, size=channels)
        img = np.where(mask[:, :, None], fg, bg)
        shape = (size, size, channels)
    if noise > 0:
        img = img + rng.normal(0.0, noise, size=shape)
    return quantize(np.clip(img, 0.0, 1.0))


def synth_images(n: int, n_classes: int = 3, size: int = 24, noise: float = 0.05,
                 seed: int = 0, channels: int = 1) -> Dataset:
    """Class-balanced shapes: image ``i`` has label ``i % n_classes``."""
    if not 1 <= n_classes <= len(SHAPES):
        raise ValidationError(f"n_classes must lie in [1, {len(SHAPES)}]")
    if n < n_classes:
        raise ValidationError("need at least one image per class")
    if size < 8:
        raise ValidationError("image size must be >= 8")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % n_classes
    images = np.stack([render_shape(SHAPES[c], rng, size, noise, channels) for c in labels])
    names = [f"img_{i:05d}.{'pgm' if channels == 1 else 'ppm'}" for i in range(n)]
    return Dataset(images, labels, names)


def write_dataset(ds: Dataset, directory) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name, img in zip(ds.names, ds.images):
        written.append(write_pnm(directory / name, img))
    labels_path = directory / "labels.csv"
    with labels_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["filename", "label"])
        for name, label in zip(ds.names, ds.labels):
            writer.writerow([name, int(label)])
    written.append(labels_path)
    return written


def load_dataset(directory, labels_file: str = "labels.csv") -> Dataset:
    directory = Path(directory)
    path = directory / labels_file
    if not path.exists():
        raise ValidationError(f"{path} not found")
    names, labels = [], []
    with path.open(newline="") as fh:
        for row in csv.DictReader(fh):
            names.append(row["filename"])
            labels.append(int(row["label"]))
    if not names:
        raise ValidationError(f"{path} lists no images")
    images = [read_pnm(directory / n) for n in names]
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise ValidationError(f"images differ in shape: {sorted(shapes)}")
    return Dataset(np.stack(images), np.asarray(labels, dtype=np.int64), names)
