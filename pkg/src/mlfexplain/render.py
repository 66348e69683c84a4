"""Heatmap overlays, drill-down panels, latent traversals and SVG curves.

Rasters are float RGB arrays in [0, 1] written as PPM; curves are plain SVG
strings so nothing beyond numpy is needed.
"""

from __future__ import annotations

import colorsys
from dataclasses import dataclass
from html import escape
from typing import Mapping, Sequence

import numpy as np

from .autoencoders import MlfAutoencoder
from .errors import DimensionError, ValidationError
from .gmlf import RelevanceReport
from .segmentation import Partition, SegmentationHierarchy

# rank 0 first; later ranks are generated around the hue circle
_BASE_COLORS = [
    (0.90, 0.10, 0.10),
    (1.00, 0.60, 0.00),
    (0.95, 0.90, 0.10),
    (0.20, 0.75, 0.25),
    (0.10, 0.70, 0.90),
    (0.20, 0.30, 0.90),
    (0.60, 0.25, 0.80),
]


def rank_colors(n: int) -> np.ndarray:
    """``n`` distinct RGB tints; row ``i`` is used for relevance rank ``i``."""
    out = list(_BASE_COLORS[:n])
    for i in range(len(out), n):
        hue = (i * 0.61803398875) % 1.0
        out.append(colorsys.hsv_to_rgb(hue, 0.85, 0.9))
    return np.asarray(out, dtype=np.float64).reshape(n, 3)


def to_rgb(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        return np.repeat(img[:, :, None], 3, axis=2)
    if img.ndim == 3 and img.shape[2] == 3:
        return img.copy()
    if img.ndim == 3 and img.shape[2] == 1:
        return np.repeat(img, 3, axis=2)
    raise DimensionError(f"cannot display image of shape {img.shape}")


@dataclass
class Overlay:
    rgb: np.ndarray
    tinted: list[int]  # region ids in rank order
    legend: list[tuple[int, int, float, tuple[float, float, float]]]  # rank, region, value, color

    def tinted_mask(self, partition: Partition) -> np.ndarray:
        return np.isin(partition.labels, self.tinted).reshape(partition.shape)


def render_heatmap(image, partition: Partition, relevance, top_n: int = 2,
                   opacity: float = 0.55) -> Overlay:
    """Tint the ``top_n`` most relevant segments, one colour per rank."""
    img = to_rgb(image)
    u = np.asarray(relevance, dtype=np.float64).reshape(-1)
    if img.shape[:2] != partition.shape:
        raise DimensionError(f"image is {img.shape[:2]}, partition covers {partition.shape}")
    if len(u) != partition.n_regions:
        raise DimensionError(f"{len(u)} relevances for {partition.n_regions} segments")
    if top_n < 0:
        raise ValidationError("top_n must be >= 0")
    order = np.argsort(-u, kind="stable")[:top_n]
    colors = rank_colors(len(order))
    out = img.copy()
    labels = partition.labels.reshape(partition.shape)
    legend = []
    for rank, (region, color) in enumerate(zip(order, colors)):
        mask = labels == region
        out[mask] = (1 - opacity) * out[mask] + opacity * color
        legend.append((rank, int(region), float(u[region]), tuple(float(c) for c in color)))
    return Overlay(out, [int(r) for r in order], legend)


def diverging_colormap(values, scale: float | None = None) -> np.ndarray:
    """Blue (negative) through white to red (positive), symmetric in ``scale``."""
    v = np.asarray(values, dtype=np.float64)
    if scale is None:
        scale = float(np.max(np.abs(v))) if v.size else 0.0
    t = np.clip(v / scale, -1.0, 1.0) if scale > 0 else np.zeros_like(v)
    pos, neg = np.clip(t, 0, None), np.clip(-t, 0, None)
    r = 1.0 - neg
    g = 1.0 - pos - neg
    b = 1.0 - pos
    return np.stack([r, g, b], axis=-1)


def render_pixel_heatmap(image, pixel_relevance, opacity: float = 0.7) -> np.ndarray:
    """Continuous overlay for a pixel relevance map (channels are summed)."""
    img = to_rgb(image)
    h, w = img.shape[:2]
    rel = np.asarray(pixel_relevance, dtype=np.float64).reshape(h, w, -1).sum(axis=2)
    heat = diverging_colormap(rel)
    return (1 - opacity) * img + opacity * heat


def tile(images: Sequence[Sequence[np.ndarray]], pad: int = 2, background: float = 1.0) -> np.ndarray:
    """Arrange a ragged list of rows of equally sized RGB images into one raster."""
    rows = [[to_rgb(im) for im in row] for row in images]
    cells = [im for row in rows for im in row]
    if not cells:
        raise ValidationError("nothing to tile")
    h, w = cells[0].shape[:2]
    if any(im.shape[:2] != (h, w) for im in cells):
        raise DimensionError("tiles must share one size")
    n_cols = max(len(row) for row in rows)
    H = len(rows) * (h + pad) + pad
    W = n_cols * (w + pad) + pad
    out = np.full((H, W, 3), background)
    for i, row in enumerate(rows):
        for j, im in enumerate(row):
            y, x = pad + i * (h + pad), pad + j * (w + pad)
            out[y:y + h, x:x + w] = im
    return out


def render_drilldown(image, chains: Sequence[Sequence[int]],
                     hierarchy: SegmentationHierarchy) -> list[list[Overlay]]:
    """One overlay per (chain, level): the chain's region at that level, tinted
    with the chain's colour. Rows are chains, columns run coarse to fine."""
    colors = rank_colors(len(chains))
    panel = []
    for c, chain in enumerate(chains):
        if len(chain) != hierarchy.depth:
            raise ValidationError(f"chain {c} has {len(chain)} entries for depth {hierarchy.depth}")
        row = []
        for level, region in enumerate(chain):
            part = hierarchy.levels[level]
            u = np.zeros(part.n_regions)
            u[region] = 1.0
            ov = render_heatmap(image, part, u, top_n=1)
            # recolour with the chain's tint so rows stay distinguishable
            base = to_rgb(image)
            mask = ov.tinted_mask(part)
            ov.rgb[mask] = 0.45 * base[mask] + 0.55 * colors[c]
            ov.legend = [(c, int(region), 1.0, tuple(float(v) for v in colors[c]))]
            row.append(ov)
        panel.append(row)
    return panel


@dataclass
class Traversal:
    images: np.ndarray  # (n_latents, steps, *image_shape)
    latents: list[int]
    offsets: np.ndarray  # (n_latents, steps) values added to h[latent]


def render_latent_traversal(ae: MlfAutoencoder, report: RelevanceReport, image_shape,
                            steps: int = 7, span: float = 3.0, n_latents: int = 2,
                            latent_std=None) -> Traversal:
    """Decode ``h`` with each of the top latents (by ``|u|``) swept over
    ``h_i +- span * std_i``; no residual is added."""
    if ae.kind != "vae" or report.kind != "vae":
        raise ValidationError("latent traversals need a VAE autoencoder and report")
    if steps < 1:
        raise ValidationError("steps must be >= 1")
    h = ae.encode()
    if latent_std is None:
        latent_std = ae.vae.latent_std if ae.vae is not None and ae.vae.latent_std is not None \
            else np.ones(len(h))
    std = np.asarray(latent_std, dtype=np.float64)
    top = np.argsort(-np.abs(report.relevance), kind="stable")[:n_latents]
    grid = np.linspace(-span, span, steps) if steps > 1 else np.zeros(1)
    images, offsets = [], []
    for i in top:
        row_off = grid * std[i]
        codes = np.repeat(h[None, :], steps, axis=0)
        codes[:, i] += row_off
        dec = ae.decode(codes, with_residual=False)
        images.append(dec.reshape((steps,) + tuple(image_shape)))
        offsets.append(row_off)
    return Traversal(np.asarray(images), [int(i) for i in top], np.asarray(offsets))


def svg_line_plot(series: Mapping[str, Sequence[float]], title: str = "",
                  xlabel: str = "step", ylabel: str = "score",
                  width: int = 480, height: int = 320) -> str:
    """Minimal multi-series line chart; x is the index of each value."""
    if not series:
        raise ValidationError("no series to plot")
    left, right, top, bottom = 56, 120, 28, 40
    pw, ph = width - left - right, height - top - bottom
    ys = np.concatenate([np.asarray(v, dtype=np.float64) for v in series.values()])
    lo, hi = float(ys.min()), float(ys.max())
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    n_max = max(len(v) for v in series.values())
    span_x = max(n_max - 1, 1)

    def px(i):
        return left + pw * i / span_x

    def py(y):
        return top + ph * (1 - (y - lo) / (hi - lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for t in np.linspace(lo, hi, 5):
        parts.append(f'<text x="{left - 4}" y="{py(t) + 4:.1f}" text-anchor="end">{t:.3g}</text>')
    for i in range(n_max):
        parts.append(f'<text x="{px(i):.1f}" y="{top + ph + 14}" text-anchor="middle">{i}</text>')
    parts.append(f'<text x="{left + pw / 2:.1f}" y="{height - 6}" text-anchor="middle">{escape(xlabel)}</text>')
    parts.append(f'<text x="14" y="{top + ph / 2:.1f}" text-anchor="middle" '
                 f'transform="rotate(-90 14 {top + ph / 2:.1f})">{escape(ylabel)}</text>')
    colors = rank_colors(len(series))
    for k, (name, values) in enumerate(series.items()):
        c = "#%02x%02x%02x" % tuple(int(round(255 * v)) for v in colors[k])
        pts = " ".join(f"{px(i):.1f},{py(float(y)):.1f}" for i, y in enumerate(values))
        parts.append(f'<polyline fill="none" stroke="{c}" stroke-width="2" points="{pts}"/>')
        ly = top + 14 * k + 8
        parts.append(f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 28}" y2="{ly}" '
                     f'stroke="{c}" stroke-width="2"/>')
        parts.append(f'<text x="{left + pw + 32}" y="{ly + 4}">{escape(name)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def overlay_svg(overlay: Overlay, scale: int = 8, title: str = "") -> str:
    """Overlay raster as SVG pixels with a legend listing rank, region and relevance."""
    rgb = np.clip(np.round(overlay.rgb * 255), 0, 255).astype(int)
    h, w = rgb.shape[:2]
    legend_h = 16 * (len(overlay.legend) + 1)
    W, H = w * scale, h * scale + legend_h + 20
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
             f'font-family="sans-serif" font-size="11">',
             f'<rect width="{W}" height="{H}" fill="white"/>']
    for y in range(h):
        for x in range(w):
            r, g, b = rgb[y, x]
            parts.append(f'<rect x="{x * scale}" y="{y * scale}" width="{scale}" height="{scale}" '
                         f'fill="#{r:02x}{g:02x}{b:02x}"/>')
    y0 = h * scale + 16
    parts.append(f'<text x="4" y="{y0}">{escape(title or "rank: region (relevance)")}</text>')
    for i, (rank, region, value, color) in enumerate(overlay.legend):
        c = "#%02x%02x%02x" % tuple(int(round(255 * v)) for v in color)
        yy = y0 + 16 * (i + 1)
        parts.append(f'<rect x="4" y="{yy - 10}" width="10" height="10" fill="{c}"/>')
        parts.append(f'<text x="18" y="{yy}">{rank + 1}: region {region} ({value:.4g})</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
