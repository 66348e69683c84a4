"""Flat and hierarchical image partitions from single-linkage thresholds.

Pixels are nodes of a 4-neighbour grid graph weighted by the Euclidean
distance between neighbouring pixel values. Level ``k`` of a hierarchy keeps
every edge lighter than ``thresholds[k]`` and takes connected components;
thresholds decrease from coarse to fine, so every fine region sits inside
exactly one coarse region. Optional small-region merging runs on the finest
level first and each coarser level starts from the finer result, which keeps
that nesting intact.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import HierarchyError, ValidationError

DEFAULT_QUANTILES = (0.9, 0.6, 0.3)


@dataclass(frozen=True)
class EdgeGraph:
    """Undirected 4-neighbour graph; edges sorted by (weight, u, v), u < v."""

    height: int
    width: int
    u: np.ndarray
    v: np.ndarray
    weight: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.height * self.width


@dataclass(frozen=True)
class Partition:
    labels: np.ndarray  # (h*w,) dense region ids
    n_regions: int
    shape: tuple[int, int]

    def mask(self, region: int) -> np.ndarray:
        return (self.labels == region).reshape(self.shape)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_regions)


@dataclass(frozen=True)
class SegmentationHierarchy:
    levels: tuple[Partition, ...]  # coarse -> fine
    parents: tuple[np.ndarray, ...]  # parents[k][child at level k+1] -> region at level k
    thresholds: tuple[float, ...] = ()

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels[0].shape

    def children(self, level: int, region: int) -> np.ndarray:
        """Ids at ``level + 1`` whose parent is ``region``."""
        return np.flatnonzero(self.parents[level] == region)

    def to_json(self) -> dict:
        return {
            "shape": list(self.shape),
            "thresholds": [float(t) for t in self.thresholds],
            "levels": [
                {"n_regions": p.n_regions, "labels": p.labels.tolist()} for p in self.levels
            ],
            "parents": [p.tolist() for p in self.parents],
        }

    @classmethod
    def from_json(cls, data: dict) -> "SegmentationHierarchy":
        shape = tuple(int(s) for s in data["shape"])
        levels = tuple(
            Partition(np.asarray(lv["labels"], dtype=np.int64), int(lv["n_regions"]), shape)
            for lv in data["levels"]
        )
        parents = tuple(np.asarray(p, dtype=np.int64) for p in data.get("parents", []))
        if len(parents) != len(levels) - 1:
            parents = tuple(_parent_map(levels[k], levels[k + 1]) for k in range(len(levels) - 1))
        return cls(levels, parents, tuple(data.get("thresholds", ())))


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        parent = self.parent
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    def union(self, a: int, b: int) -> bool:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return False
        if self.size[ra] < self.size[rb] or (self.size[ra] == self.size[rb] and rb < ra):
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]
        return True

    def copy(self) -> "_UnionFind":
        other = _UnionFind(0)
        other.parent = self.parent.copy()
        other.size = self.size.copy()
        return other

    def labels(self) -> np.ndarray:
        roots = np.array([self.find(i) for i in range(len(self.parent))], dtype=np.int64)
        return _dense_labels(roots)


def _dense_labels(raw: np.ndarray) -> np.ndarray:
    """Relabel to 0..m-1 in order of each region's first (lowest) pixel."""
    _, first, inverse = np.unique(raw, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse.reshape(-1)]


def _as_image(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim == 2:
        img = img[:, :, None]
    if img.ndim != 3 or img.shape[0] < 1 or img.shape[1] < 1 or img.shape[2] < 1:
        raise ValidationError(f"expected an h x w [x ch] image, got shape {np.shape(image)}")
    if not np.all(np.isfinite(img)):
        raise ValidationError("image contains non-finite values")
    return img


def build_edge_graph(image) -> EdgeGraph:
    img = _as_image(image)
    h, w, _ = img.shape
    idx = np.arange(h * w).reshape(h, w)
    us, vs, ws = [], [], []
    if w > 1:
        us.append(idx[:, :-1].ravel())
        vs.append(idx[:, 1:].ravel())
        ws.append(np.sqrt(((img[:, :-1] - img[:, 1:]) ** 2).sum(axis=2)).ravel())
    if h > 1:
        us.append(idx[:-1, :].ravel())
        vs.append(idx[1:, :].ravel())
        ws.append(np.sqrt(((img[:-1, :] - img[1:, :]) ** 2).sum(axis=2)).ravel())
    if us:
        u, v, wt = np.concatenate(us), np.concatenate(vs), np.concatenate(ws)
    else:
        u = v = np.zeros(0, dtype=np.int64)
        wt = np.zeros(0)
    order = np.lexsort((v, u, wt))
    return EdgeGraph(h, w, u[order], v[order], wt[order])


def minimum_spanning_edges(graph: EdgeGraph) -> np.ndarray:
    """Indices (into the sorted edge arrays) of Kruskal's spanning forest."""
    uf = _UnionFind(graph.n_nodes)
    keep = [i for i in range(len(graph.weight)) if uf.union(int(graph.u[i]), int(graph.v[i]))]
    return np.asarray(keep, dtype=np.int64)


def auto_thresholds(image, quantiles: Sequence[float] = DEFAULT_QUANTILES) -> list[float]:
    """Thresholds at quantiles of the MST edge weights, coarse to fine.

    A threshold keeps edges with weight up to and including its quantile;
    ties between quantiles are nudged apart so the list stays strictly
    decreasing.
    """
    qs = list(quantiles)
    if any(not 0 <= q <= 1 for q in qs) or any(a <= b for a, b in zip(qs, qs[1:])):
        raise ValidationError("quantiles must be strictly decreasing within [0, 1]")
    graph = build_edge_graph(image)
    mst = graph.weight[minimum_spanning_edges(graph)]
    if len(mst) == 0:
        mst = np.zeros(1)
    lam = [float(np.nextafter(np.quantile(mst, q), np.inf)) for q in qs]
    for k in range(len(lam) - 2, -1, -1):
        if lam[k] <= lam[k + 1]:
            lam[k] = float(np.nextafter(lam[k + 1], np.inf))
    return lam


def _validate_thresholds(thresholds) -> list[float]:
    lam = [float(t) for t in thresholds]
    if not lam:
        raise ValidationError("at least one threshold is required")
    if any(not np.isfinite(t) or t < 0 for t in lam):
        raise ValidationError("thresholds must be finite and nonnegative")
    if any(a <= b for a, b in zip(lam, lam[1:])):
        raise ValidationError(f"thresholds must be strictly decreasing, got {lam}")
    return lam


def _parent_map(coarse: Partition, fine: Partition) -> np.ndarray:
    parent = np.full(fine.n_regions, -1, dtype=np.int64)
    parent[fine.labels] = coarse.labels
    return parent


def hierarchical_segment(image, thresholds: Sequence[float], min_size: int = 0) -> SegmentationHierarchy:
    """K-level hierarchy; ``thresholds`` run coarse (largest) to fine."""
    lam = _validate_thresholds(thresholds)
    graph = build_edge_graph(image)
    n = graph.n_nodes
    if min_size < 0:
        raise ValidationError("min_size must be >= 0")
    uf = _UnionFind(n)
    edges = list(zip(graph.u.tolist(), graph.v.tolist(), graph.weight.tolist()))
    partitions: list[Partition] = [None] * len(lam)
    for k in range(len(lam) - 1, -1, -1):
        for a, b, w in edges:
            if w >= lam[k]:
                break
            uf.union(a, b)
        merged = min_size > 1
        while merged:
            merged = False
            for a, b, _ in edges:
                ra, rb = uf.find(a), uf.find(b)
                if ra != rb and (uf.size[ra] < min_size or uf.size[rb] < min_size):
                    merged |= uf.union(ra, rb)
        labels = uf.labels()
        partitions[k] = Partition(labels, int(labels.max()) + 1, (graph.height, graph.width))
    parents = tuple(_parent_map(partitions[k], partitions[k + 1]) for k in range(len(lam) - 1))
    return SegmentationHierarchy(tuple(partitions), parents, tuple(lam))


def flat_segment(image, threshold: float, min_size: int = 0) -> Partition:
    return hierarchical_segment(image, [threshold], min_size).levels[0]


def auto_segment(image, quantiles: Sequence[float] = DEFAULT_QUANTILES,
                 min_size: int = 16) -> SegmentationHierarchy:
    return hierarchical_segment(image, auto_thresholds(image, quantiles), min_size)


def finest_as_flat(hierarchy: SegmentationHierarchy) -> SegmentationHierarchy:
    """One-level hierarchy holding only the finest partition."""
    return SegmentationHierarchy((hierarchy.levels[-1],), (), tuple(hierarchy.thresholds[-1:]))


def check_refinement(hierarchy: SegmentationHierarchy) -> tuple[bool, tuple[int, int] | None]:
    """Verify that each finer region lies inside exactly one coarser region.

    Returns ``(ok, violation)`` where ``violation`` is ``(level, child_id)``
    for the first finer-level region that straddles several parents or
    contradicts the stored parent map.
    """
    levels = hierarchy.levels
    for k in range(len(levels) - 1):
        coarse, fine = levels[k], levels[k + 1]
        if coarse.labels.shape != fine.labels.shape:
            raise HierarchyError(f"levels {k} and {k + 1} cover different pixel sets")
        pairs = np.unique(np.stack([fine.labels, coarse.labels]), axis=1)
        counts = np.bincount(pairs[0], minlength=fine.n_regions)
        bad = np.flatnonzero(counts > 1)
        if len(bad):
            return False, (k + 1, int(bad[0]))
        if k < len(hierarchy.parents):
            expected = _parent_map(coarse, fine)
            mismatch = np.flatnonzero(np.asarray(hierarchy.parents[k]) != expected)
            if len(mismatch):
                return False, (k + 1, int(mismatch[0]))
    return True, None


def is_connected(partition: Partition) -> bool:
    """True if every region is 4-connected."""
    from scipy import ndimage

    lab = partition.labels.reshape(partition.shape)
    for r in range(partition.n_regions):
        _, n = ndimage.label(lab == r)
        if n != 1:
            return False
    return True
