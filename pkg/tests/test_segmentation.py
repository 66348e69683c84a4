import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from mlfexplain.errors import ValidationError
from mlfexplain.segmentation import (
    Partition,
    SegmentationHierarchy,
    auto_segment,
    auto_thresholds,
    build_edge_graph,
    check_refinement,
    finest_as_flat,
    flat_segment,
    hierarchical_segment,
    is_connected,
    minimum_spanning_edges,
)


def components_oracle(image, lam):
    """Connected components of the pixel graph restricted to edges lighter than lam."""
    g = build_edge_graph(image)
    keep = g.weight < lam
    adj = coo_matrix((np.ones(keep.sum()), (g.u[keep], g.v[keep])), shape=(g.n_nodes, g.n_nodes))
    return connected_components(adj, directed=False)[1]


def same_partition(a, b):
    pairs = np.unique(np.stack([a, b]), axis=1)
    return len(pairs[0]) == len(np.unique(a)) == len(np.unique(b))


def test_constant_image_has_zero_weights():
    g = build_edge_graph(np.full((3, 4), 7.0))
    assert len(g.weight) == 3 * 3 + 2 * 4
    assert np.all(g.weight == 0)


def test_two_pixel_edge():
    g = build_edge_graph(np.array([[0.0, 255.0]]))
    np.testing.assert_array_equal(g.weight, [255.0])


def test_grayscale_square_weights():
    g = build_edge_graph(np.array([[0.0, 0.0], [10.0, 10.0]]))
    horizontal = (g.v - g.u) == 1
    np.testing.assert_array_equal(g.weight[horizontal], [0.0, 0.0])
    np.testing.assert_array_equal(g.weight[~horizontal], [10.0, 10.0])


def test_color_distance_is_euclidean():
    g = build_edge_graph(np.array([[[0.0, 0.0, 0.0], [3.0, 4.0, 0.0]]]))
    np.testing.assert_allclose(g.weight, [5.0])


def test_edges_sorted_by_weight_then_indices():
    g = build_edge_graph(np.random.default_rng(0).integers(0, 3, size=(5, 5)).astype(float))
    keys = list(zip(g.weight, g.u, g.v))
    assert keys == sorted(keys)
    assert np.all(g.u < g.v)


def test_empty_image_rejected():
    with pytest.raises(ValidationError):
        build_edge_graph(np.zeros((0, 3)))


def test_constant_image_single_region_every_level():
    h = hierarchical_segment(np.full((4, 4), 3.0), [5.0, 2.0, 0.5])
    assert [p.n_regions for p in h.levels] == [1, 1, 1]


def test_halves_split_only_at_fine_level():
    img = np.zeros((4, 6))
    img[:, 3:] = 255.0
    h = hierarchical_segment(img, [300.0, 10.0])
    assert [p.n_regions for p in h.levels] == [1, 2]
    np.testing.assert_array_equal(h.parents[0], [0, 0])
    assert check_refinement(h) == (True, None)


def test_checkerboard_gives_singletons():
    img = 255.0 * (np.indices((4, 5)).sum(axis=0) % 2)
    p = flat_segment(img, 10.0)
    assert p.n_regions == 20
    np.testing.assert_array_equal(np.sort(p.labels), np.arange(20))


def test_single_pixel_image():
    p = flat_segment(np.array([[1.0]]), 1.0)
    assert p.n_regions == 1


def test_labels_are_dense_and_ordered_by_first_pixel():
    img = np.array([[0.0, 9.0, 9.0], [0.0, 0.0, 5.0]])
    p = flat_segment(img, 1.0)
    np.testing.assert_array_equal(p.labels, [0, 1, 1, 0, 0, 2])


@pytest.mark.parametrize("bad", [[1.0, 2.0], [2.0, 2.0], [1.0, -1.0], [], [np.inf]])
def test_invalid_thresholds(bad):
    with pytest.raises(ValidationError):
        hierarchical_segment(np.zeros((2, 2)), bad)


def test_straddling_child_is_reported():
    coarse = Partition(np.array([0, 0, 1, 1]), 2, (2, 2))
    fine = Partition(np.array([0, 1, 1, 2]), 3, (2, 2))
    h = SegmentationHierarchy((coarse, fine), (np.array([0, 0, 1]),))
    assert check_refinement(h) == (False, (1, 1))


def test_wrong_parent_map_is_reported():
    coarse = Partition(np.array([0, 0, 1, 1]), 2, (2, 2))
    fine = Partition(np.array([0, 1, 2, 3]), 4, (2, 2))
    h = SegmentationHierarchy((coarse, fine), (np.array([0, 0, 0, 1]),))
    assert check_refinement(h) == (False, (1, 2))


def test_single_level_is_vacuously_refined():
    h = hierarchical_segment(np.random.default_rng(0).random((5, 5)), [0.3])
    assert h.depth == 1 and check_refinement(h) == (True, None)


images = st.integers(0, 10_000).map(
    lambda s: np.random.default_rng(s).integers(0, 6, size=(1 + s % 7, 1 + (s // 7) % 7, 1 + s % 3)).astype(float)
)
threshold_lists = st.lists(st.floats(0.0, 12.0), min_size=1, max_size=4, unique=True).map(
    lambda xs: sorted(xs, reverse=True)
)


@settings(max_examples=80, deadline=None)
@given(img=images, lam=threshold_lists)
def test_levels_match_components_oracle(img, lam):
    h = hierarchical_segment(img, lam)
    for k, p in enumerate(h.levels):
        assert same_partition(p.labels, components_oracle(img, lam[k]))
        assert is_connected(p)
    assert check_refinement(h) == (True, None)


@settings(max_examples=60, deadline=None)
@given(img=images, lam=threshold_lists, min_size=st.integers(0, 10))
def test_refinement_and_connectivity_with_merging(img, lam, min_size):
    h = hierarchical_segment(img, lam, min_size=min_size)
    assert check_refinement(h) == (True, None)
    counts = [p.n_regions for p in h.levels]
    assert counts == sorted(counts)
    for p in h.levels:
        assert is_connected(p)
        if p.n_regions > 1:
            assert p.sizes().min() >= min(min_size, p.labels.size)


@settings(max_examples=60, deadline=None)
@given(img=images, a=st.floats(0.0, 12.0), b=st.floats(0.0, 12.0))
def test_lower_threshold_never_reduces_regions(img, a, b):
    lo, hi = sorted([a, b])
    assert flat_segment(img, lo).n_regions >= flat_segment(img, hi).n_regions


def _shuffled_union(image, lam, seed):
    g = build_edge_graph(image)
    parent = list(range(g.n_nodes))

    def find(i):
        while parent[i] != i:
            i = parent[i]
        return i

    for e in np.random.default_rng(seed).permutation(len(g.weight)):
        if g.weight[e] < lam:
            parent[find(int(g.u[e]))] = find(int(g.v[e]))
    return np.array([find(i) for i in range(g.n_nodes)])


@pytest.mark.parametrize("seed", range(5))
def test_result_independent_of_edge_insertion_order(seed):
    # binary image: many tied weights
    img = np.random.default_rng(3).integers(0, 2, size=(8, 8)).astype(float)
    p = flat_segment(img, 0.5)
    assert same_partition(p.labels, _shuffled_union(img, 0.5, seed))
    assert flat_segment(img, 0.5).labels.tobytes() == p.labels.tobytes()


def test_mst_has_n_minus_one_edges_on_connected_grid():
    g = build_edge_graph(np.random.default_rng(0).random((6, 7)))
    assert len(minimum_spanning_edges(g)) == 41


def test_auto_thresholds_follow_quantiles():
    img = np.random.default_rng(2).random((12, 12))
    g = build_edge_graph(img)
    mst = g.weight[minimum_spanning_edges(g)]
    lam = auto_thresholds(img)
    for q, t in zip((0.9, 0.6, 0.3), lam):
        assert t > np.quantile(mst, q) and np.isclose(t, np.quantile(mst, q))
    assert lam == sorted(lam, reverse=True) and len(set(lam)) == 3


def test_auto_thresholds_on_constant_image_are_distinct():
    lam = auto_thresholds(np.zeros((4, 4)))
    assert lam[0] > lam[1] > lam[2] > 0


def test_auto_segment_default_is_three_nested_levels():
    img = np.random.default_rng(4).random((16, 16))
    h = auto_segment(img)
    assert h.depth == 3 and check_refinement(h)[0]
    assert all(p.sizes().min() >= 16 for p in h.levels if p.n_regions > 1)


def test_finest_as_flat_keeps_last_level():
    h = auto_segment(np.random.default_rng(5).random((10, 10)), min_size=4)
    flat = finest_as_flat(h)
    assert flat.depth == 1
    assert flat.levels[0] is h.levels[-1]


def test_json_round_trip():
    h = auto_segment(np.random.default_rng(6).random((9, 9)), min_size=3)
    back = SegmentationHierarchy.from_json(h.to_json())
    for a, b in zip(h.levels, back.levels):
        np.testing.assert_array_equal(a.labels, b.labels)
    for a, b in zip(h.parents, back.parents):
        np.testing.assert_array_equal(a, b)
    assert back.thresholds == h.thresholds
