"""Simulated annotator: picks the frame with the poorest labeling and draws
correctional scribbles along the skeleton of error regions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import NoGroundTruth, NothingToAnnotate
from .interact import Scribble
from .metrics import jaccard
from .superpixel import FOUR_CONN


@dataclass
class SimUserConfig:
    max_regions: int = 3  # error regions annotated per round
    round1_erosion: int = 2
    region_erosion: int = 1
    min_region_area: int = 2


@dataclass
class ErrorRegion:
    frame: int
    pixels: np.ndarray  # boolean mask
    true_category: int
    predicted_category: int
    area: int


def select_worst_frame(pred_maps, gt_maps):
    """Frame index minimizing mean per-object Jaccard; ties -> lowest index."""
    if gt_maps is None or len(gt_maps) == 0:
        raise NoGroundTruth("no ground-truth masks")
    num_objects = int(max(int(np.max(g)) for g in gt_maps))
    if num_objects == 0:
        raise NoGroundTruth("ground truth contains no objects")
    best_t, best_score = 0, np.inf
    for t, (pred, gt) in enumerate(zip(pred_maps, gt_maps)):
        score = float(np.mean([jaccard(pred == c, gt == c)
                               for c in range(1, num_objects + 1)]))
        if score < best_score - 1e-12:
            best_t, best_score = t, score
    return best_t


# --- skeleton scribbles ----------------------------------------------------------

def skeletonize(mask):
    """Morphological skeleton: union over erosion levels of the residues
    eroded_k minus opening(eroded_k). A square yields its diagonals."""
    eroded = np.asarray(mask, dtype=bool).copy()
    skel = np.zeros_like(eroded)
    while eroded.any():
        opened = ndimage.binary_opening(eroded, structure=FOUR_CONN)
        skel |= eroded & ~opened
        eroded = ndimage.binary_erosion(eroded, structure=FOUR_CONN)
    return skel


def _skeleton_longest_path(skel):
    """Longest path between endpoints of the skeleton's largest 8-connected
    component, by double BFS. Returns an ordered list of (x, y)."""
    comp, n = ndimage.label(skel, structure=np.ones((3, 3), bool))
    if n == 0:
        return []
    sizes = np.bincount(comp.ravel())[1:]
    main = int(np.argmax(sizes)) + 1
    ys, xs = np.nonzero(comp == main)
    pix = {(int(x), int(y)): i for i, (x, y) in enumerate(zip(xs, ys))}
    order = sorted(pix)

    def neighbors(p):
        x, y = p
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                q = (x + dx, y + dy)
                if q in pix:
                    yield q

    def bfs(start):
        dist = {start: 0}
        parent = {start: None}
        frontier = [start]
        while frontier:
            nxt = []
            for p in frontier:
                for q in neighbors(p):
                    if q not in dist:
                        dist[q] = dist[p] + 1
                        parent[q] = p
                        nxt.append(q)
            nxt.sort()
            frontier = nxt
        far = min((p for p in dist), key=lambda p: (-dist[p], p))
        return far, dist, parent

    a, _, _ = bfs(order[0])
    b, _, parent = bfs(a)
    path = []
    cur = b
    while cur is not None:
        path.append(cur)
        cur = parent[cur]
    return path[::-1]


def _scribble_from_mask(mask, erosion, frame, category):
    """Scribble along the skeleton longest path of the eroded mask; the
    raster always stays inside `mask`."""
    work = np.asarray(mask, dtype=bool)
    for e in range(erosion, -1, -1):
        eroded = (ndimage.binary_erosion(work, structure=FOUR_CONN, iterations=e)
                  if e > 0 else work)
        if eroded.sum() >= 2:
            break
    if eroded.sum() < 2:
        return None
    path = _skeleton_longest_path(skeletonize(eroded))
    if len(path) < 2:
        ys, xs = np.nonzero(eroded)
        path = [(int(xs[0]), int(ys[0])), (int(xs[1]), int(ys[1]))]
    return Scribble(frame=frame, points=[(float(x), float(y)) for x, y in path],
                    category=category)


def find_error_regions(frame, pred_map, gt_map, min_area=1):
    """Connected regions where the prediction disagrees with ground truth,
    grouped by true category (largest region per category)."""
    regions = []
    err = pred_map != gt_map
    for cat in sorted(np.unique(gt_map[err]).tolist()):
        mask = err & (gt_map == cat)
        comp, n = ndimage.label(mask, structure=FOUR_CONN)
        if n == 0:
            continue
        sizes = np.bincount(comp.ravel())[1:]
        best = int(np.argmax(sizes)) + 1
        if sizes[best - 1] < min_area:
            continue
        region_mask = comp == best
        pred_vals = pred_map[region_mask]
        regions.append(ErrorRegion(
            frame=frame, pixels=region_mask, true_category=int(cat),
            predicted_category=int(np.bincount(pred_vals).argmax()),
            area=int(sizes[best - 1])))
    return regions


def synthesize_scribbles(frame, prediction, gt, round_index, rng, cfg=None):
    """Correctional scribbles for one frame.

    Round 1 annotates every object along its skeleton (mask eroded 2 px);
    later rounds annotate the largest error regions (up to cfg.max_regions),
    each labeled with the region's true category. Raises NothingToAnnotate
    when the prediction is already perfect.
    """
    cfg = cfg or SimUserConfig()
    if round_index <= 1:
        objects = sorted(int(c) for c in np.unique(gt) if c != 0)
        if not objects:
            raise NothingToAnnotate("frame contains no objects")
        out = []
        for obj in objects:
            s = _scribble_from_mask(gt == obj, cfg.round1_erosion, frame, obj)
            if s is not None:
                out.append(s)
        if not out:
            raise NothingToAnnotate("all objects too small to scribble")
        return out

    if np.array_equal(prediction, gt):
        raise NothingToAnnotate("prediction is perfect on this frame")
    regions = find_error_regions(frame, prediction, gt,
                                 min_area=cfg.min_region_area)
    regions.sort(key=lambda r: (-r.area, r.true_category))
    out = []
    for region in regions[:cfg.max_regions]:
        s = _scribble_from_mask(region.pixels, cfg.region_erosion, frame,
                                region.true_category)
        if s is not None:
            out.append(s)
    if not out:
        raise NothingToAnnotate("remaining error regions are too small")
    return out
