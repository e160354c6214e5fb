import numpy as np
import pytest

from graphvos import metrics
from graphvos.errors import (
    DimensionMismatch,
    EmptyCurve,
    LogCorrupt,
    NonMonotonicTime,
)


def brute_jaccard(a, b):
    inter = union = 0
    for y in range(a.shape[0]):
        for x in range(a.shape[1]):
            if a[y, x] and b[y, x]:
                inter += 1
            if a[y, x] or b[y, x]:
                union += 1
    return 1.0 if union == 0 else inter / union


def brute_boundary_f(a, b, tol):
    def boundary(m):
        pts = []
        h, w = m.shape
        for y in range(h):
            for x in range(w):
                if not m[y, x]:
                    continue
                for dy, dx in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                    yy, xx = y + dy, x + dx
                    if not (0 <= yy < h and 0 <= xx < w) or not m[yy, xx]:
                        pts.append((y, x))
                        break
        return pts

    pa, pb = boundary(a), boundary(b)
    if not pa and not pb:
        return 1.0
    if not pa or not pb:
        return 0.0

    def matched(points, others):
        hits = 0
        for (y, x) in points:
            if min((y - v) ** 2 + (x - u) ** 2 for (v, u) in others) <= tol * tol:
                hits += 1
        return hits / len(points)

    p = matched(pa, pb)
    r = matched(pb, pa)
    return 0.0 if (p + r) == 0 else 2 * p * r / (p + r)


class TestJaccard:
    def test_identical(self):
        m = np.zeros((6, 6), dtype=bool)
        m[2:4, 2:4] = True
        assert metrics.jaccard(m, m) == 1.0

    def test_disjoint(self):
        a = np.zeros((6, 6), dtype=bool)
        b = np.zeros((6, 6), dtype=bool)
        a[0, 0] = True
        b[5, 5] = True
        assert metrics.jaccard(a, b) == 0.0

    def test_three_fifths(self):
        a = np.zeros((1, 5), dtype=bool)
        b = np.zeros((1, 5), dtype=bool)
        a[0, :4] = True
        b[0, 1:] = True
        assert metrics.jaccard(a, b) == pytest.approx(0.6)

    def test_both_empty(self):
        z = np.zeros((3, 3), dtype=bool)
        assert metrics.jaccard(z, z) == 1.0

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionMismatch):
            metrics.jaccard(np.zeros((2, 2), bool), np.zeros((3, 3), bool))

    def test_symmetry(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            a = rng.random((8, 8)) > 0.5
            b = rng.random((8, 8)) > 0.5
            assert metrics.jaccard(a, b) == metrics.jaccard(b, a)

    def test_monotone_in_growing_intersection(self):
        # growing the intersection with fixed union never decreases J
        u = np.zeros((6, 6), dtype=bool)
        u[1:5, 1:5] = True
        prev = -1.0
        gt = u.copy()
        for k in range(1, 17):
            pred = np.zeros_like(u)
            ys, xs = np.nonzero(u)
            pred[ys[:k], xs[:k]] = True
            pred |= ~u & np.zeros_like(u)
            j = metrics.jaccard(pred | ~gt & pred, gt)
            assert j >= prev
            prev = j


class TestBoundaryF:
    def test_identical(self):
        m = np.zeros((8, 8), dtype=bool)
        m[2:6, 2:6] = True
        assert metrics.boundary_f(m, m, tol=2) == 1.0

    def test_empty_vs_nonempty(self):
        m = np.zeros((8, 8), dtype=bool)
        m[2:6, 2:6] = True
        assert metrics.boundary_f(np.zeros((8, 8), bool), m, tol=2) == 0.0

    def test_shifted_square_matches_bruteforce(self):
        tol = 2
        a = np.zeros((16, 16), dtype=bool)
        b = np.zeros((16, 16), dtype=bool)
        a[3:8, 3:8] = True
        b[3 + tol + 2:8 + tol + 2, 3:8] = True
        fast = metrics.boundary_f(a, b, tol=tol)
        slow = brute_boundary_f(a, b, tol)
        assert fast == pytest.approx(slow, abs=1e-9)

    def test_swap_invariance(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            a = rng.random((10, 10)) > 0.6
            b = rng.random((10, 10)) > 0.6
            assert metrics.boundary_f(a, b, tol=1) == pytest.approx(
                metrics.boundary_f(b, a, tol=1), abs=1e-12)


class TestAuc:
    def test_single_point_constant_hold(self):
        assert metrics.auc_over_time([(0.0, 0.7)], 10.0) == pytest.approx(0.7)

    def test_half_step(self):
        assert metrics.auc_over_time([(0.0, 0.0), (5.0, 1.0)], 10.0) == \
            pytest.approx(0.5)

    def test_zero_before_first_point(self):
        assert metrics.auc_over_time([(5.0, 1.0)], 10.0) == pytest.approx(0.5)

    def test_empty_curve(self):
        with pytest.raises(EmptyCurve):
            metrics.auc_over_time([], 1.0)

    def test_non_monotonic(self):
        with pytest.raises(NonMonotonicTime):
            metrics.auc_over_time([(1.0, 0.5), (1.0, 0.6)], 2.0)

    def test_redundant_flat_points_invariant(self):
        base = [(0.0, 0.3), (4.0, 0.8)]
        redundant = [(0.0, 0.3), (2.0, 0.3), (4.0, 0.8)]
        assert metrics.auc_over_time(base, 8.0) == pytest.approx(
            metrics.auc_over_time(redundant, 8.0))

    def test_monotone_in_pointwise_dominance(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            times = np.sort(rng.uniform(0, 9, size=4))
            times += np.arange(4) * 1e-3
            lo = rng.uniform(0, 0.5, size=4)
            hi = lo + rng.uniform(0, 0.5, size=4)
            a = metrics.auc_over_time(list(zip(times, lo)), 10.0)
            b = metrics.auc_over_time(list(zip(times, hi)), 10.0)
            assert b >= a - 1e-12


class TestEvaluateSession:
    def _records(self, js):
        out = []
        cum = 0.0
        for i, j in enumerate(js):
            cum += 100.0
            out.append({
                "round": i + 1, "video": "v", "inference_ms": 100.0,
                "cum_time_ms": cum,
                "frame_j": {"1": [j, j]}, "frame_f": {"1": [j, j]},
            })
        return out

    def test_perfect_session(self):
        report = metrics.evaluate_session(self._records([1.0] * 8), t_max=1.0)
        assert report["j_at_2"] == 1.0
        assert report["j_at_8"] == 1.0
        assert report["auc_j"] == pytest.approx(1.0 - 0.1)  # 0 before 0.1 s

    def test_rows_match_naive_recount(self):
        report = metrics.evaluate_session(self._records([0.25, 0.5, 0.75]))
        assert len(report["rows"]) == 3 * 2  # rounds x frames (1 object)
        assert report["round_means"][1]["mean_j"] == pytest.approx(0.5)

    def test_empty_log_raises(self):
        with pytest.raises(LogCorrupt):
            metrics.evaluate_session([])

    def test_reference_scores_emitted(self, tmp_path):
        report = metrics.evaluate_session(self._records([0.5]))
        path = tmp_path / "summary.json"
        metrics.write_report_json(str(path), {"mean_j_at_2": 0.5})
        import json
        data = json.loads(path.read_text())
        assert data["reference_scores"]["gnn_j_at_2"] == 0.622
        assert data["reference_scores"]["gnn_auc_j"] == 0.735
        assert data["reference_scores"]["mrf_j_at_8"] == 0.419
