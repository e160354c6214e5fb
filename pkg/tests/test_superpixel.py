import numpy as np
import pytest
from scipy import ndimage

from graphvos import superpixel
from graphvos.color import rgb_to_lab
from graphvos.errors import MarkerConflict
from graphvos.superpixel import (
    Segmentation,
    canny_edges,
    refine_with_borders,
    slic_segment,
    validate_partition,
    watershed_split,
)


class TestSlic:
    def test_uniform_color_partition(self):
        img = rgb_to_lab(np.full((32, 32, 3), 128, dtype=np.uint8))
        seg = slic_segment(img, 4, 10.0)
        assert seg.num_segments == 4
        validate_partition(seg.labels)
        assert seg.counts.sum() == 32 * 32

    def test_black_white_halves(self):
        # oracle: Lloyd iterations in labxy space converge to the halves
        img = np.zeros((8, 8, 3), dtype=np.uint8)
        img[:, 4:] = 255
        seg = slic_segment(rgb_to_lab(img), 2, 10.0)
        assert seg.num_segments == 2
        left = seg.labels[:, :4]
        right = seg.labels[:, 4:]
        assert len(np.unique(left)) == 1
        assert len(np.unique(right)) == 1
        assert left[0, 0] != right[0, 0]

    def test_real_size_frame_about_800_segments(self):
        rng = np.random.default_rng(0)
        img = (ndimage.gaussian_filter(rng.random((480, 854, 3)), 3.0) * 255)
        seg = slic_segment(rgb_to_lab(img.astype(np.uint8)), 800, 10.0)
        assert 700 <= seg.num_segments <= 900
        validate_partition(seg.labels)

    def test_determinism(self):
        rng = np.random.default_rng(5)
        img = rgb_to_lab((rng.random((24, 24, 3)) * 255).astype(np.uint8))
        a = slic_segment(img, 9, 10.0)
        b = slic_segment(img, 9, 10.0)
        assert np.array_equal(a.labels, b.labels)


class TestCanny:
    def test_constant_image_empty(self):
        assert not canny_edges(np.full((12, 12), 0.4), 0.05, 0.1).any()

    def test_vertical_step_single_line(self):
        g = np.zeros((16, 16))
        g[:, 8:] = 1.0
        e = canny_edges(g, 0.05, 0.1)
        cols = np.nonzero(e)[1]
        assert len(set(cols)) == 1
        assert abs(cols[0] - 8) <= 1  # within 1 px of the step
        assert set(e.sum(axis=1)) == {1}  # 1 px wide per row

    def test_infinite_thresholds_empty(self):
        g = np.zeros((16, 16))
        g[:, 8:] = 1.0
        assert not canny_edges(g, np.inf, np.inf).any()


class TestRefine:
    def _simple_seg(self, h, w, n=1):
        labels = np.zeros((h, w), dtype=np.int32)
        if n == 2:
            labels[:, w // 2:] = 1
        seg = Segmentation(labels=labels, grid_interval=np.sqrt(h * w / max(n, 1)))
        return seg.recompute_stats(np.zeros((h, w, 3)))

    def test_empty_edges_identity(self):
        seg = self._simple_seg(10, 10, n=2)
        out = refine_with_borders(seg, np.zeros((10, 10), dtype=bool),
                                  depth=1, cap=800,
                                  lab_image=np.zeros((10, 10, 3)))
        assert np.array_equal(out.labels, seg.labels)

    def test_full_width_edge_bisects(self):
        seg = self._simple_seg(11, 8, n=1)
        edges = np.zeros((11, 8), dtype=bool)
        edges[5, :] = True
        out = refine_with_borders(seg, edges, depth=0, cap=800,
                                  lab_image=np.zeros((11, 8, 3)))
        # oracle: connected components after removing the edge row
        assert out.num_segments == 2
        validate_partition(out.labels)
        assert len(np.unique(out.labels[:5])) == 1
        assert len(np.unique(out.labels[6:])) == 1
        assert out.labels[0, 0] != out.labels[10, 0]

    def test_cap_enforced_with_sibling_merges(self):
        rng = np.random.default_rng(2)
        img = (rng.random((24, 24, 3)) * 255).astype(np.uint8)
        lab = rgb_to_lab(img)
        seg = slic_segment(lab, 9, 10.0)
        edges = np.zeros((24, 24), dtype=bool)
        edges[::4, :] = True
        cap = seg.num_segments + 2
        out = refine_with_borders(seg, edges, depth=1, cap=cap, lab_image=lab)
        assert out.num_segments <= cap
        validate_partition(out.labels)

    def test_children_nest_inside_parents(self):
        rng = np.random.default_rng(7)
        img = (rng.random((20, 20, 3)) * 255).astype(np.uint8)
        lab = rgb_to_lab(img)
        seg = slic_segment(lab, 6, 10.0)
        edges = canny_edges(img.mean(axis=2) / 255.0, 0.02, 0.05)
        out = refine_with_borders(seg, edges, depth=1, cap=800, lab_image=lab)
        validate_partition(out.labels)
        # every child is contained in exactly one parent
        for child in range(out.num_segments):
            parents = np.unique(seg.labels[out.labels == child])
            assert len(parents) == 1


class TestWatershed:
    def test_flat_topography_geodesic_split(self):
        mask = np.ones((5, 9), dtype=bool)
        gray = np.full((5, 9), 0.5)
        part = watershed_split(mask, gray, [[(1, 2)], [(7, 2)]])
        assert part[2, 1] == 0 and part[2, 7] == 1
        assert set(np.unique(part)) == {0, 1}
        # geodesic nearest-marker: left columns to 0, right to 1
        assert (part[:, :4] == 0).all()
        assert (part[:, 5:] == 1).all()

    def test_ridge_split_along_gradient_maximum(self):
        h, w = 9, 13
        gray = np.zeros((h, w))
        gray[:, 6] = 1.0  # bright ridge -> gradient maxima flank column 6
        mask = np.ones((h, w), dtype=bool)
        part = watershed_split(mask, gray, [[(1, 4)], [(11, 4)]])
        # oracle: flood assigns each side of the ridge to its marker
        assert (part[:, :5] == 0).all()
        assert (part[:, 8:] == 1).all()
        boundary_cols = np.nonzero((part[:, :-1] != part[:, 1:]).any(axis=0))[0]
        assert all(abs(c - 6) <= 1 for c in boundary_cols)

    def test_markers_cover_everything(self):
        mask = np.zeros((4, 6), dtype=bool)
        mask[1:3, 1:5] = True
        m0 = [(x, y) for y in (1, 2) for x in (1, 2)]
        m1 = [(x, y) for y in (1, 2) for x in (3, 4)]
        part = watershed_split(mask, np.zeros((4, 6)), [m0, m1])
        for (x, y) in m0:
            assert part[y, x] == 0
        for (x, y) in m1:
            assert part[y, x] == 1
        assert (part[~mask] == -1).all()

    def test_overlapping_markers_raise(self):
        mask = np.ones((4, 4), dtype=bool)
        with pytest.raises(MarkerConflict):
            watershed_split(mask, np.zeros((4, 4)), [[(1, 1)], [(1, 1)]])

    def test_basins_contain_markers(self):
        rng = np.random.default_rng(0)
        gray = rng.random((12, 12))
        mask = np.ones((12, 12), dtype=bool)
        markers = [[(2, 2), (3, 2)], [(9, 9)], [(2, 9)]]
        part = watershed_split(mask, gray, markers)
        for mi, pts in enumerate(markers):
            for (x, y) in pts:
                assert part[y, x] == mi
        assert (part >= 0).all()


def test_partition_invariant_randomized_operations():
    """1,000 randomized segmentation operations preserve the partition."""
    rng = np.random.default_rng(42)
    ops = 0
    while ops < 1000:
        h = int(rng.integers(12, 28))
        w = int(rng.integers(12, 28))
        img = (rng.random((h, w, 3)) * 255).astype(np.uint8)
        lab = rgb_to_lab(img)
        seg = slic_segment(lab, int(rng.integers(2, 12)), 10.0)
        validate_partition(seg.labels)
        ops += 1
        edges = canny_edges(img.mean(axis=2) / 255.0,
                            rng.uniform(0.01, 0.05), rng.uniform(0.05, 0.15))
        seg2 = refine_with_borders(seg, edges, depth=int(rng.integers(0, 2)),
                                   cap=int(rng.integers(6, 40)), lab_image=lab)
        validate_partition(seg2.labels)
        ops += 1
        # watershed split of the largest segment with 2 random markers
        sizes = seg2.counts
        target = int(np.argmax(sizes))
        ys, xs = np.nonzero(seg2.labels == target)
        if len(ys) >= 2:
            i, j = rng.choice(len(ys), size=2, replace=False)
            part = watershed_split(seg2.labels == target,
                                   img.mean(axis=2) / 255.0,
                                   [[(xs[i], ys[i])], [(xs[j], ys[j])]])
            labels = seg2.labels.copy()
            labels[part == 1] = seg2.num_segments
            validate_partition(labels)
            ops += 1
