"""Per-frame superpixel segmentation: SLIC clustering, Canny border
candidates, border-guided splitting with local re-clustering, and
marker-based watershed splitting of individual segments.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import MarkerConflict

FOUR_CONN = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


@dataclass
class SlicConfig:
    k_target: int = 800
    compactness: float = 10.0
    iterations: int = 10
    cap: int = 800
    refine_depth: int = 1
    canny_low: float = 0.08
    canny_high: float = 0.16


@dataclass
class Segmentation:
    """Label map plus per-segment statistics for one frame."""

    labels: np.ndarray  # (h, w) int32, ids contiguous 0..S-1
    grid_interval: float  # SLIC seed spacing S, kept for local re-clustering
    counts: np.ndarray = None  # (S,)
    bboxes: np.ndarray = None  # (S, 4): y0, x0, y1, x1 inclusive
    centroids: np.ndarray = None  # (S, 2): (x, y) pixel coordinates
    mean_lab: np.ndarray = None  # (S, 3)
    var_lab: np.ndarray = None  # (S, 3)
    mean_flow_fw: np.ndarray = None  # (S, 2), zeros until flow is attached
    mean_flow_bw: np.ndarray = None

    @property
    def num_segments(self):
        return int(self.labels.max()) + 1

    def recompute_stats(self, lab_image):
        n = self.num_segments
        lab = np.asarray(lab_image, dtype=np.float64)
        flat = self.labels.ravel()
        h, w = self.labels.shape
        ys, xs = np.mgrid[0:h, 0:w]
        counts = np.bincount(flat, minlength=n).astype(np.int64)
        self.counts = counts
        safe = np.maximum(counts, 1).astype(np.float64)
        self.centroids = np.stack(
            [np.bincount(flat, weights=xs.ravel(), minlength=n) / safe,
             np.bincount(flat, weights=ys.ravel(), minlength=n) / safe],
            axis=1,
        )
        means = np.stack(
            [np.bincount(flat, weights=lab[..., c].ravel(), minlength=n) / safe
             for c in range(3)], axis=1)
        sq = np.stack(
            [np.bincount(flat, weights=(lab[..., c] ** 2).ravel(), minlength=n) / safe
             for c in range(3)], axis=1)
        self.mean_lab = means
        self.var_lab = np.maximum(sq - means**2, 0.0)
        boxes = np.empty((n, 4), dtype=np.int64)
        objs = ndimage.find_objects(self.labels + 1)
        for i, sl in enumerate(objs):
            boxes[i] = (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
        self.bboxes = boxes
        if self.mean_flow_fw is None or len(self.mean_flow_fw) != n:
            self.mean_flow_fw = np.zeros((n, 2))
            self.mean_flow_bw = np.zeros((n, 2))
        return self

    def attach_flow_means(self, flow_fw, flow_bw):
        """Mean flow vectors per segment; pass None at sequence ends."""
        n = self.num_segments
        flat = self.labels.ravel()
        safe = np.maximum(self.counts, 1).astype(np.float64)
        for attr, fl in (("mean_flow_fw", flow_fw), ("mean_flow_bw", flow_bw)):
            if fl is None:
                setattr(self, attr, np.zeros((n, 2)))
                continue
            fl = np.asarray(fl, dtype=np.float64)
            vecs = np.stack(
                [np.bincount(flat, weights=fl[..., c].ravel(), minlength=n) / safe
                 for c in range(2)], axis=1)
            setattr(self, attr, vecs)
        return self


def _renumber(labels):
    """Relabel to contiguous ids ordered by first row-major occurrence."""
    flat = labels.ravel()
    _, first_idx, inv = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first_idx))
    return order[inv].reshape(labels.shape).astype(np.int32)


def _enforce_connectivity(labels):
    """Keep the largest 4-connected component per label; merge each orphan
    component into its largest assigned neighbor segment."""
    comp = np.zeros_like(labels)
    next_id = 0
    keep = []
    comp_label = []
    for lab_id in range(int(labels.max()) + 1):
        mask = labels == lab_id
        if not mask.any():
            continue
        sub, n = ndimage.label(mask, structure=FOUR_CONN)
        sizes = np.bincount(sub.ravel())[1:]
        main = int(np.argmax(sizes)) + 1
        for c in range(1, n + 1):
            comp[sub == c] = next_id
            keep.append(c == main)
            comp_label.append(lab_id)
            next_id += 1
    keep = np.array(keep)
    assigned = keep.copy()
    out = comp.copy()
    sizes = np.bincount(comp.ravel(), minlength=next_id)
    # orphan components attach to the largest currently-assigned neighbor
    pending = [c for c in range(next_id) if not keep[c]]
    while pending:
        progress = False
        remaining = []
        for c in pending:
            mask = comp == c
            dil = ndimage.binary_dilation(mask, structure=FOUR_CONN) & ~mask
            neigh = np.unique(comp[dil])
            neigh = [n_ for n_ in neigh if assigned[n_]]
            if not neigh:
                remaining.append(c)
                continue
            target = max(neigh, key=lambda n_: (sizes[n_], -n_))
            comp[mask] = target
            sizes[target] += sizes[c]
            sizes[c] = 0
            assigned[c] = True
            progress = True
        if not progress:
            break
        pending = remaining
    return _renumber(comp)


def slic_segment(frame_lab, k_target, compactness=10.0, iterations=10):
    """Grid-seeded k-means in (L, a, b, x, y) space with fixed iteration count,
    then connectivity enforcement. Returns a Segmentation over the frame."""
    lab = np.asarray(frame_lab, dtype=np.float64)
    h, w = lab.shape[:2]
    k_target = max(1, int(k_target))
    S = math.sqrt(h * w / k_target)
    nx = max(1, math.ceil(math.sqrt(k_target * w / h)))
    ny = max(1, math.ceil(k_target / nx))
    cx = (np.arange(nx) + 0.5) * w / nx
    cy = (np.arange(ny) + 0.5) * h / ny
    centers_xy = np.array([(x, y) for y in cy for x in cx])
    centers_lab = lab[np.minimum(np.rint(centers_xy[:, 1]).astype(int), h - 1),
                      np.minimum(np.rint(centers_xy[:, 0]).astype(int), w - 1)]
    n_seeds = len(centers_xy)
    radius = int(math.ceil(max(w / nx, h / ny))) + 1
    ratio2 = (compactness / S) ** 2

    ys_full, xs_full = np.mgrid[0:h, 0:w]
    labels = np.zeros((h, w), dtype=np.int32)
    for _ in range(iterations):
        best = np.full((h, w), np.inf)
        labels.fill(0)
        for s in range(n_seeds):
            sx, sy = centers_xy[s]
            x0, x1 = max(0, int(sx) - radius), min(w, int(sx) + radius + 1)
            y0, y1 = max(0, int(sy) - radius), min(h, int(sy) + radius + 1)
            if x0 >= x1 or y0 >= y1:
                continue
            win = lab[y0:y1, x0:x1]
            d_lab = ((win - centers_lab[s]) ** 2).sum(axis=-1)
            d_xy = (xs_full[y0:y1, x0:x1] - sx) ** 2 + (ys_full[y0:y1, x0:x1] - sy) ** 2
            d = d_lab + ratio2 * d_xy
            closer = d < best[y0:y1, x0:x1]
            best[y0:y1, x0:x1] = np.where(closer, d, best[y0:y1, x0:x1])
            labels[y0:y1, x0:x1] = np.where(closer, s, labels[y0:y1, x0:x1])
        flat = labels.ravel()
        cnt = np.bincount(flat, minlength=n_seeds).astype(np.float64)
        nonempty = cnt > 0
        safe = np.maximum(cnt, 1)
        new_xy = np.stack(
            [np.bincount(flat, weights=xs_full.ravel(), minlength=n_seeds) / safe,
             np.bincount(flat, weights=ys_full.ravel(), minlength=n_seeds) / safe],
            axis=1)
        new_lab = np.stack(
            [np.bincount(flat, weights=lab[..., c].ravel(), minlength=n_seeds) / safe
             for c in range(3)], axis=1)
        centers_xy[nonempty] = new_xy[nonempty]
        centers_lab[nonempty] = new_lab[nonempty]

    labels = _enforce_connectivity(labels)
    return Segmentation(labels=labels, grid_interval=S).recompute_stats(lab)


# --- Canny edge detection -------------------------------------------------------

def canny_edges(frame_gray, low, high, sigma=1.4):
    """Gaussian smoothing, Sobel gradients, non-maximum suppression and
    hysteresis thresholding. Returns a boolean edge map."""
    img = np.asarray(frame_gray, dtype=np.float64)
    sm = ndimage.gaussian_filter(img, sigma=sigma, mode="nearest")
    gx = ndimage.sobel(sm, axis=1, mode="nearest")
    gy = ndimage.sobel(sm, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    if not np.any(mag > 0):
        return np.zeros_like(mag, dtype=bool)

    angle = np.mod(np.arctan2(gy, gx), np.pi)
    # quantized gradient direction: 0=E/W, 1=NE/SW, 2=N/S, 3=NW/SE
    bins = np.zeros(mag.shape, dtype=np.int8)
    bins[(angle >= np.pi / 8) & (angle < 3 * np.pi / 8)] = 1
    bins[(angle >= 3 * np.pi / 8) & (angle < 5 * np.pi / 8)] = 2
    bins[(angle >= 5 * np.pi / 8) & (angle < 7 * np.pi / 8)] = 3
    offsets = {0: (0, 1), 1: (-1, 1), 2: (-1, 0), 3: (-1, -1)}
    pad = np.pad(mag, 1, mode="constant")
    h, w = mag.shape
    nms = np.zeros((h, w), dtype=bool)
    for b, (dy, dx) in offsets.items():
        sel = bins == b
        plus = pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        minus = pad[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        # asymmetric tie-break keeps ridges 1 px wide on symmetric profiles
        nms |= sel & (mag >= plus) & (mag > minus)

    strong = nms & (mag >= high)
    weak = nms & (mag >= low)
    if not strong.any():
        return np.zeros_like(strong)
    comp, n = ndimage.label(weak, structure=np.ones((3, 3), bool))
    has_strong = np.zeros(n + 1, dtype=bool)
    has_strong[np.unique(comp[strong])] = True
    return has_strong[comp] & weak


# --- border-guided refinement ---------------------------------------------------

def _assign_edge_pixels(window_labels, window_mask, unassigned):
    """Give `unassigned` pixels (within the segment) the label of the nearest
    assigned pixel, Euclidean distance via EDT."""
    assigned = window_mask & ~unassigned
    if not assigned.any():
        return window_labels
    _, (iy, ix) = ndimage.distance_transform_edt(~assigned, return_indices=True)
    out = window_labels.copy()
    out[unassigned] = window_labels[iy[unassigned], ix[unassigned]]
    return out


def _local_recluster(lab, mask, k_local, compactness, S):
    """Small labxy k-means over one segment's pixels; returns int map with
    values 0..k-1 over mask (4-connected, orphans merged into siblings)."""
    ys, xs = np.nonzero(mask)
    pts = np.stack([lab[ys, xs, 0], lab[ys, xs, 1], lab[ys, xs, 2],
                    xs.astype(np.float64), ys.astype(np.float64)], axis=1)
    n = len(pts)
    k_local = int(min(k_local, n))
    if k_local < 2:
        return np.zeros(n, dtype=np.int32), ys, xs
    ratio = compactness / max(S / math.sqrt(2.0), 1e-9)
    scaled = pts.copy()
    scaled[:, 3:] *= ratio
    idx = np.linspace(0, n - 1, k_local).round().astype(int)
    centers = scaled[idx].copy()
    assign = np.zeros(n, dtype=np.int32)
    for _ in range(5):
        d = ((scaled[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        assign = d.argmin(axis=1).astype(np.int32)
        for c in range(k_local):
            sel = assign == c
            if sel.any():
                centers[c] = scaled[sel].mean(axis=0)
    # connectivity inside the segment: orphan comps join largest sibling
    sub = np.full(mask.shape, -1, dtype=np.int32)
    sub[ys, xs] = assign
    out = _enforce_connectivity_masked(sub, mask)
    return out[ys, xs], ys, xs


def _enforce_connectivity_masked(sub_labels, mask):
    """Connectivity enforcement restricted to `mask` (labels >= 0 inside)."""
    work = sub_labels.copy()
    max_lab = int(work[mask].max())
    comp = np.full(work.shape, -1, dtype=np.int32)
    next_id = 0
    keep = []
    for lab_id in range(max_lab + 1):
        m = (work == lab_id) & mask
        if not m.any():
            continue
        cc, n = ndimage.label(m, structure=FOUR_CONN)
        sizes = np.bincount(cc.ravel())[1:]
        main = int(np.argmax(sizes)) + 1
        for c in range(1, n + 1):
            comp[cc == c] = next_id
            keep.append(c == main)
            next_id += 1
    keep = np.array(keep)
    sizes = np.bincount(comp[mask].ravel(), minlength=next_id)
    assigned = keep.copy()
    pending = [c for c in range(next_id) if not keep[c]]
    while pending:
        progress, remaining = False, []
        for c in pending:
            m = comp == c
            dil = ndimage.binary_dilation(m, structure=FOUR_CONN) & mask & ~m
            neigh = [n_ for n_ in np.unique(comp[dil]) if n_ >= 0 and assigned[n_]]
            if not neigh:
                remaining.append(c)
                continue
            target = max(neigh, key=lambda n_: (sizes[n_], -n_))
            comp[m] = target
            sizes[target] += sizes[c]
            assigned[c] = True
            progress = True
        if not progress:
            break
        pending = remaining
    inside = comp[mask]
    _, inv = np.unique(inside, return_inverse=True)
    out = np.full(comp.shape, -1, dtype=np.int32)
    out[mask] = inv
    return out


def refine_with_borders(seg, edges, depth=1, cap=800, compactness=10.0,
                        lab_image=None):
    """Split segments along edge chains, locally re-cluster segments close to
    edges (`depth` recursion levels), and enforce the per-frame cap by merging
    smallest adjacent sibling pairs. Children always nest inside parents."""
    edges = np.asarray(edges, dtype=bool)
    labels = seg.labels.copy()
    if not edges.any():
        out = Segmentation(labels=labels, grid_interval=seg.grid_interval)
        return out.recompute_stats(lab_image) if lab_image is not None else _copy_stats(out, seg)

    lab = lab_image if lab_image is not None else np.zeros(labels.shape + (3,))
    sibling_group = {}  # child id -> group key
    next_id = int(labels.max()) + 1

    # 1) split along edge chains
    for s in range(int(labels.max()) + 1):
        mask = labels == s
        if not mask.any() or not (mask & edges).any():
            continue
        interior = mask & ~edges
        if not interior.any():
            continue
        cc, n = ndimage.label(interior, structure=FOUR_CONN)
        if n < 2:
            continue
        local = np.full(labels.shape, -1, dtype=np.int32)
        local[cc > 0] = cc[cc > 0] - 1
        local = _assign_edge_pixels(local, mask, mask & (local < 0))
        # Euclidean-nearest assignment can strand pixels that are not
        # 4-connected to their component; reattach them within the parent
        local = _enforce_connectivity_masked(local, mask)
        n = int(local[mask].max()) + 1
        if n < 2:
            continue
        ids = [s] + list(range(next_id, next_id + n - 1))
        for c in range(n):
            labels[mask & (local == c)] = ids[c]
            sibling_group[ids[c]] = ("split", s)
        next_id += n - 1

    # 2) recursive local re-clustering near edges
    near_edge = ndimage.distance_transform_edt(~edges) <= 2.0
    candidates = set(np.unique(labels[near_edge]))
    for _ in range(max(0, int(depth))):
        created = set()
        for s in sorted(candidates):
            mask = labels == s
            area = int(mask.sum())
            k_local = max(2, int(round(2.0 * area / max(seg.grid_interval**2, 1.0))))
            if area < 2 or k_local < 2:
                continue
            assign, ys, xs = _local_recluster(lab, mask, k_local, compactness,
                                              seg.grid_interval)
            n_children = int(assign.max()) + 1
            if n_children < 2:
                continue
            ids = [s] + list(range(next_id, next_id + n_children - 1))
            for c in range(n_children):
                sel = assign == c
                labels[ys[sel], xs[sel]] = ids[c]
                sibling_group[ids[c]] = ("re", s)
            next_id += n_children - 1
            created.update(ids)
        candidates = {s for s in created if (labels[near_edge] == s).any()}
        if not candidates:
            break

    # 3) cap enforcement: merge smallest adjacent sibling pairs first
    labels = _merge_to_cap(labels, sibling_group, cap)
    labels = _renumber(labels)
    out = Segmentation(labels=labels, grid_interval=seg.grid_interval)
    return out.recompute_stats(lab)


def _adjacent_pairs(labels):
    a = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    b = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    pairs = np.concatenate([a, b], axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    lo = pairs.min(axis=1)
    hi = pairs.max(axis=1)
    return set(zip(lo.tolist(), hi.tolist()))


def _merge_to_cap(labels, sibling_group, cap):
    n = int(labels.max()) + 1
    if n <= cap:
        return labels
    counts = np.bincount(labels.ravel(), minlength=n).astype(np.int64)
    group = dict(sibling_group)
    alive = n

    def merge(a, b):
        nonlocal alive
        labels[labels == b] = a
        counts[a] += counts[b]
        counts[b] = 0
        group.pop(b, None)
        alive -= 1

    while alive > cap:
        adj = _adjacent_pairs(labels)
        sib_pairs = [(x, y) for (x, y) in adj
                     if group.get(x) is not None and group.get(x) == group.get(y)]
        pool = sib_pairs if sib_pairs else sorted(adj)
        if not pool:
            break
        a, b = min(pool, key=lambda p: (counts[p[0]] + counts[p[1]], p))
        merge(min(a, b), max(a, b))
    return labels


def _copy_stats(dst, src):
    for f_ in ("counts", "bboxes", "centroids", "mean_lab", "var_lab",
               "mean_flow_fw", "mean_flow_bw"):
        v = getattr(src, f_)
        setattr(dst, f_, None if v is None else v.copy())
    return dst


# --- marker-based watershed -----------------------------------------------------

def gradient_magnitude(frame_gray):
    g = np.asarray(frame_gray, dtype=np.float64)
    return np.hypot(ndimage.sobel(g, axis=1, mode="nearest"),
                    ndimage.sobel(g, axis=0, mode="nearest"))


def watershed_split(segment_mask, frame_gray, markers):
    """Flood the segment from the markers in order of gradient magnitude.

    `markers` is a list of >= 2 pixel sets, each a sequence of (x, y) integer
    coordinates inside the segment. Returns an int map: -1 outside the
    segment, marker index inside. Every basin contains its marker.
    """
    mask = np.asarray(segment_mask, dtype=bool)
    h, w = mask.shape
    grad = gradient_magnitude(frame_gray)
    seen = set()
    out = np.full((h, w), -1, dtype=np.int32)
    marker_pixels = []
    for m_idx, pts in enumerate(markers):
        for (x, y) in pts:
            x, y = int(x), int(y)
            if not (0 <= x < w and 0 <= y < h) or not mask[y, x]:
                raise MarkerConflict(f"marker pixel ({x}, {y}) outside segment")
            if (x, y) in seen:
                raise MarkerConflict(f"markers overlap at ({x}, {y})")
            seen.add((x, y))
            out[y, x] = m_idx
            marker_pixels.append((y * w + x, m_idx))
    if len(markers) < 2 or any(len(p) == 0 for p in markers):
        raise MarkerConflict("need >= 2 nonempty marker sets")

    heap = []
    counter = 0
    marker_pixels.sort()
    offsets = (-w, -1, 1, w)

    def push_neighbors(idx, label):
        nonlocal counter
        y, x = divmod(idx, w)
        for off in offsets:
            j = idx + off
            if off == -1 and x == 0 or off == 1 and x == w - 1:
                continue
            if j < 0 or j >= h * w:
                continue
            jy, jx = divmod(j, w)
            if mask[jy, jx] and out[jy, jx] == -1:
                heapq.heappush(heap, (grad[jy, jx], counter, j, label))
                counter += 1

    for idx, label in marker_pixels:
        push_neighbors(idx, label)
    while heap:
        _, _, idx, label = heapq.heappop(heap)
        jy, jx = divmod(idx, w)
        if out[jy, jx] != -1:
            continue
        out[jy, jx] = label
        push_neighbors(idx, label)
    return out


# --- invariants ------------------------------------------------------------------

def validate_partition(labels):
    """Assert the partition invariant: contiguous ids, full cover, each
    segment 4-connected. Raises AssertionError on violation."""
    labels = np.asarray(labels)
    n = int(labels.max()) + 1
    counts = np.bincount(labels.ravel(), minlength=n)
    assert labels.min() == 0 and (counts > 0).all(), "ids not contiguous"
    for s in range(n):
        _, ncomp = ndimage.label(labels == s, structure=FOUR_CONN)
        assert ncomp == 1, f"segment {s} is not 4-connected ({ncomp} parts)"
    return True
