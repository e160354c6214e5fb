import numpy as np
import pytest

from graphvos import simuser
from graphvos.errors import NoGroundTruth, NothingToAnnotate
from graphvos.interact import rasterize_polyline
from graphvos.metrics import jaccard


def masks_with_square(t, shape, pos, size=6, category=1):
    out = []
    for _ in range(t):
        m = np.zeros(shape, dtype=np.int32)
        m[pos[1]:pos[1] + size, pos[0]:pos[0] + size] = category
        out.append(m)
    return out


class TestWorstFrame:
    def test_unique_minimum(self):
        gt = masks_with_square(6, (20, 20), (4, 4))
        pred = [g.copy() for g in gt]
        pred[4][:] = 0  # frame 4 entirely wrong
        assert simuser.select_worst_frame(pred, gt) == 4

    def test_tie_goes_to_lowest_index(self):
        gt = masks_with_square(5, (16, 16), (3, 3))
        pred = [np.zeros((16, 16), dtype=np.int32) for _ in range(5)]
        assert simuser.select_worst_frame(pred, gt) == 0

    def test_matches_bruteforce_metric(self):
        rng = np.random.default_rng(0)
        gt = [rng.integers(0, 3, (12, 12)).astype(np.int32) for _ in range(6)]
        pred = [rng.integers(0, 3, (12, 12)).astype(np.int32) for _ in range(6)]
        k = max(int(g.max()) for g in gt)
        scores = []
        for p, g in zip(pred, gt):
            scores.append(np.mean([jaccard(p == c, g == c)
                                   for c in range(1, k + 1)]))
        assert simuser.select_worst_frame(pred, gt) == int(np.argmin(scores))

    def test_object_relabel_invariance(self):
        rng = np.random.default_rng(1)
        gt = [rng.integers(0, 3, (10, 10)).astype(np.int32) for _ in range(4)]
        pred = [rng.integers(0, 3, (10, 10)).astype(np.int32) for _ in range(4)]
        swap = {0: 0, 1: 2, 2: 1}
        gt2 = [np.vectorize(swap.get)(g).astype(np.int32) for g in gt]
        pred2 = [np.vectorize(swap.get)(p).astype(np.int32) for p in pred]
        assert simuser.select_worst_frame(pred, gt) == \
            simuser.select_worst_frame(pred2, gt2)

    def test_no_ground_truth(self):
        with pytest.raises(NoGroundTruth):
            simuser.select_worst_frame([], None)


class TestSkeleton:
    def test_square_skeleton_path_length(self):
        mask = np.zeros((24, 24), dtype=bool)
        mask[2:22, 2:22] = True
        skel = simuser.skeletonize(mask)
        assert skel.sum() >= 2
        assert (mask | ~skel).all()  # skeleton inside mask
        path = simuser._skeleton_longest_path(skel)
        assert len(path) >= 10


class TestSynthesizeScribbles:
    def test_round1_square_object(self):
        gt = np.zeros((24, 24), dtype=np.int32)
        gt[2:22, 2:22] = 1
        rng = np.random.default_rng(0)
        scribbles = simuser.synthesize_scribbles(0, None, gt, 1, rng)
        assert len(scribbles) == 1
        s = scribbles[0]
        assert s.category == 1
        raster = rasterize_polyline(s.points, gt.shape)
        assert len(raster) >= 10
        assert all(gt[y, x] == 1 for (x, y) in raster)

    def test_round1_annotates_every_object(self):
        gt = np.zeros((30, 30), dtype=np.int32)
        gt[2:10, 2:10] = 1
        gt[15:26, 15:26] = 2
        scribbles = simuser.synthesize_scribbles(0, None, gt, 1,
                                                 np.random.default_rng(0))
        assert sorted(s.category for s in scribbles) == [1, 2]

    def test_perfect_prediction_raises(self):
        gt = np.zeros((16, 16), dtype=np.int32)
        gt[4:9, 4:9] = 1
        with pytest.raises(NothingToAnnotate):
            simuser.synthesize_scribbles(0, gt.copy(), gt, 3,
                                         np.random.default_rng(0))

    def test_missing_blob_gets_true_category_scribble(self):
        gt = np.zeros((24, 24), dtype=np.int32)
        gt[3:12, 3:12] = 2
        pred = np.zeros_like(gt)  # object 2 missed entirely
        scribbles = simuser.synthesize_scribbles(0, pred, gt, 2,
                                                 np.random.default_rng(0))
        assert len(scribbles) == 1
        s = scribbles[0]
        assert s.category == 2
        raster = rasterize_polyline(s.points, gt.shape)
        assert all(gt[y, x] == 2 and pred[y, x] != 2 for (x, y) in raster)

    def test_rasters_stay_inside_error_regions(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            gt = np.zeros((20, 20), dtype=np.int32)
            y0, x0 = rng.integers(2, 8, size=2)
            gt[y0:y0 + 8, x0:x0 + 8] = 1
            pred = gt.copy()
            # corrupt a block of the object
            pred[y0:y0 + 4, x0:x0 + 4] = 0
            scribbles = simuser.synthesize_scribbles(0, pred, gt, 2, rng)
            for s in scribbles:
                for (x, y) in rasterize_polyline(s.points, gt.shape):
                    assert pred[y, x] != gt[y, x]
                    assert gt[y, x] == s.category

    def test_false_positive_gets_background_scribble(self):
        gt = np.zeros((20, 20), dtype=np.int32)
        pred = np.zeros_like(gt)
        pred[5:14, 5:14] = 1  # spurious object
        scribbles = simuser.synthesize_scribbles(0, pred, gt, 2,
                                                 np.random.default_rng(0))
        assert any(s.category == 0 for s in scribbles)

    def test_at_most_three_regions(self):
        gt = np.zeros((40, 40), dtype=np.int32)
        pred = np.zeros_like(gt)
        for i, (x, y) in enumerate([(2, 2), (2, 20), (20, 2), (20, 20),
                                    (30, 30)]):
            gt[y:y + 6, x:x + 6] = 1
        scribbles = simuser.synthesize_scribbles(0, pred, gt, 2,
                                                 np.random.default_rng(0))
        assert 1 <= len(scribbles) <= 3
