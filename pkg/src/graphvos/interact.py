"""Interactive session engine: scribble rasterization, seed sampling and
flow-consistent propagation, the global appearance label model, conflict-driven
segment splitting and per-round orchestration of feature refresh + inference.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from . import flow as flow_mod
from . import gnn as gnn_mod
from . import graph as graph_mod
from . import metrics, mrf, superpixel
from .color import gray_from_rgb
from .errors import (
    EmptyScribble,
    InsufficientData,
    MarkerConflict,
    NotTrained,
    SessionClosed,
)


@dataclass
class Scribble:
    frame: int
    points: list  # [(x, y), ...] sub-pixel allowed, >= 2 points
    category: int  # 0 = background, 1..k = objects
    round_index: int = 0

    def validate(self, frame_shape):
        h, w = frame_shape
        if len(self.points) < 2:
            raise EmptyScribble("scribble needs >= 2 points")
        for (x, y) in self.points:
            if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                raise EmptyScribble(f"point ({x}, {y}) out of bounds")
        return self

    def to_dict(self):
        return {"frame": self.frame, "points": [list(p) for p in self.points],
                "category": self.category, "round_index": self.round_index}

    @classmethod
    def from_dict(cls, d):
        return cls(frame=d["frame"], points=[tuple(p) for p in d["points"]],
                   category=d["category"], round_index=d.get("round_index", 0))


@dataclass
class SeedPoint:
    position: tuple  # (x, y) float
    frame: int
    category: int
    origin: str = "sampled"  # or "propagated"
    source_id: int = -1

    def to_dict(self):
        return {"position": list(self.position), "frame": self.frame,
                "category": self.category, "origin": self.origin,
                "source_id": self.source_id}

    @classmethod
    def from_dict(cls, d):
        return cls(position=tuple(d["position"]), frame=d["frame"],
                   category=d["category"], origin=d["origin"],
                   source_id=d.get("source_id", -1))


@dataclass
class SeedPropConfig:
    beta: float = 5.0  # round-trip gate in pixels, strict <
    max_seeds_per_scribble: int = 64
    bg_ring_distance: float = 20.0


def rasterize_polyline(points, frame_shape):
    """1-px-wide raster of the polyline: Bresenham between consecutive
    rounded points. Returns an (n, 2) int array of (x, y), deduplicated in
    draw order."""
    h, w = frame_shape
    seen = set()
    out = []

    def put(x, y):
        x = min(max(x, 0), w - 1)
        y = min(max(y, 0), h - 1)
        if (x, y) not in seen:
            seen.add((x, y))
            out.append((x, y))

    rounded = [(int(round(x)), int(round(y))) for (x, y) in points]
    for (x0, y0), (x1, y1) in zip(rounded, rounded[1:]):
        dx = abs(x1 - x0)
        dy = -abs(y1 - y0)
        sx = 1 if x0 < x1 else -1
        sy = 1 if y0 < y1 else -1
        err = dx + dy
        x, y = x0, y0
        while True:
            put(x, y)
            if x == x1 and y == y1:
                break
            e2 = 2 * err
            if e2 >= dy:
                err += dy
                x += sx
            if e2 <= dx:
                err += dx
                y += sy
    if len(rounded) == 1:
        put(*rounded[0])
    return np.array(out, dtype=np.int64).reshape(-1, 2)


def sample_seeds(scribble, cfg, rng, frame_shape):
    """Uniform sample without replacement from the scribble raster."""
    raster = rasterize_polyline(scribble.points, frame_shape)
    if len(raster) == 0:
        raise EmptyScribble("empty scribble raster")
    n = min(len(raster), cfg.max_seeds_per_scribble)
    idx = rng.choice(len(raster), size=n, replace=False)
    return [SeedPoint(position=(float(raster[i, 0]), float(raster[i, 1])),
                      frame=scribble.frame, category=scribble.category,
                      origin="sampled") for i in sorted(idx.tolist())]


def generate_background_seeds(fg_scribbles, frame_shape, cfg, rng):
    """Background seeds from pixels far from all foreground rasters.

    Distance threshold halves until some pixel qualifies; at most
    max_seeds_per_scribble seeds are drawn without replacement.
    """
    h, w = frame_shape
    mask = np.zeros((h, w), dtype=bool)
    frame = fg_scribbles[0].frame
    for s in fg_scribbles:
        r = rasterize_polyline(s.points, frame_shape)
        mask[r[:, 1], r[:, 0]] = True
    dist = ndimage.distance_transform_edt(~mask)
    threshold = cfg.bg_ring_distance
    ys, xs = np.nonzero(dist > threshold)
    while len(ys) == 0 and threshold > 1e-6:
        threshold /= 2.0
        ys, xs = np.nonzero(dist > threshold)
    n = min(len(ys), cfg.max_seeds_per_scribble)
    idx = rng.choice(len(ys), size=n, replace=False)
    return [SeedPoint(position=(float(xs[i]), float(ys[i])), frame=frame,
                      category=0, origin="sampled")
            for i in sorted(idx.tolist())]


def _roundtrip_batch(pos, f, g):
    """Vectorized ||g(f(p)) - p||; out-of-frame lookups give +inf.
    Element-for-element identical arithmetic to flow.roundtrip_error."""
    f = np.asarray(f, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    h, w = f.shape[:2]
    x, y = pos[:, 0], pos[:, 1]
    ok = (x >= 0) & (x <= w - 1) & (y >= 0) & (y <= h - 1)
    u = flow_mod.bilinear_sample(f, x, y)
    qx, qy = x + u[:, 0], y + u[:, 1]
    ok &= (qx >= 0) & (qx <= w - 1) & (qy >= 0) & (qy <= h - 1)
    v = flow_mod.bilinear_sample(g, qx, qy)
    err = np.hypot(qx + v[:, 0] - x, qy + v[:, 1] - y)
    err[~ok] = np.inf
    return err, np.stack([qx, qy], axis=1)


def propagate_seeds(seeds, flows, cfg):
    """Walk each seed forward and backward frame by frame while the flow
    round-trip error stays strictly below beta. Returns the propagated
    copies (origin="propagated", source_id = index into `seeds`)."""
    t_total = len(flows.forward) + 1
    out = []
    by_frame = {}
    for sid, seed in enumerate(seeds):
        by_frame.setdefault(seed.frame, []).append(sid)

    for f0 in sorted(by_frame):
        ids0 = np.array(by_frame[f0])
        start = np.array([seeds[i].position for i in ids0], dtype=np.float64)
        # forward walk
        ids, pos = ids0, start
        for t in range(f0, t_total - 1):
            if len(ids) == 0:
                break
            err, nxt = _roundtrip_batch(pos, flows.forward[t], flows.backward[t])
            keep = err < cfg.beta
            ids, pos = ids[keep], nxt[keep]
            for i, p in zip(ids, pos):
                out.append(SeedPoint(position=(float(p[0]), float(p[1])),
                                     frame=t + 1, category=seeds[i].category,
                                     origin="propagated", source_id=int(i)))
        # backward walk (forward/backward fields swap roles)
        ids, pos = ids0, start
        for t in range(f0, 0, -1):
            if len(ids) == 0:
                break
            err, nxt = _roundtrip_batch(pos, flows.backward[t - 1],
                                        flows.forward[t - 1])
            keep = err < cfg.beta
            ids, pos = ids[keep], nxt[keep]
            for i, p in zip(ids, pos):
                out.append(SeedPoint(position=(float(p[0]), float(p[1])),
                                     frame=t - 1, category=seeds[i].category,
                                     origin="propagated", source_id=int(i)))
    return out


def partition_labels(label_set, rng):
    """Uniformly random nontrivial bipartition of the object label set."""
    labels = sorted(label_set)
    k = len(labels)
    if k < 2:
        raise ValueError("partition_labels needs k >= 2")
    while True:
        side = rng.integers(0, 2, size=k)
        if 0 < side.sum() < k:
            break
    fg = {labels[i] for i in range(k) if side[i] == 1}
    bg = set(labels) - fg
    return fg, bg


# --- global label model -----------------------------------------------------------

def logistic_loss_and_grad(w, b, x, y, l2):
    """Mean binary cross-entropy of sigmoid(x w + b) plus 0.5*l2*||w||^2."""
    scores = x @ w + b
    p = 1.0 / (1.0 + np.exp(-scores))
    eps = 1e-12
    loss = float(-np.mean(y * np.log(p + eps) + (1 - y) * np.log(1 - p + eps))
                 + 0.5 * l2 * (w @ w))
    diff = (p - y) / len(y)
    return loss, x.T @ diff + l2 * w, float(diff.sum())


class GlobalLabelModel:
    """One-vs-rest logistic regression over segment appearance features."""

    def __init__(self, l2=1e-3, max_epochs=500, grad_tol=1e-6):
        self.l2 = l2
        self.max_epochs = max_epochs
        self.grad_tol = grad_tol
        self.categories = []
        self.weights = None
        self.biases = None
        self.feat_mean = None
        self.feat_std = None
        self.trained = False

    def fit(self, features, categories):
        x = np.asarray(features, dtype=np.float64)
        y_cat = np.asarray(categories)
        self.categories = sorted(set(int(c) for c in y_cat))
        if len(self.categories) < 2:
            raise InsufficientData(
                f"one-vs-rest needs >= 2 categories, got {self.categories}")
        self.feat_mean = x.mean(axis=0)
        self.feat_std = np.maximum(x.std(axis=0), 1e-9)
        xs = (x - self.feat_mean) / self.feat_std
        d = xs.shape[1]
        # safe fixed step from the logistic-loss curvature bound
        lr = 1.0 / (0.25 * float((xs * xs).sum(axis=1).mean()) + self.l2 + 1e-9)
        self.weights = np.zeros((len(self.categories), d))
        self.biases = np.zeros(len(self.categories))
        for ci, cat in enumerate(self.categories):
            y = (y_cat == cat).astype(np.float64)
            w = np.zeros(d)
            b = 0.0
            for _ in range(self.max_epochs):
                _, gw, gb = logistic_loss_and_grad(w, b, xs, y, self.l2)
                gnorm = np.sqrt(gw @ gw + gb * gb)
                if gnorm < self.grad_tol:
                    break
                w -= lr * gw
                b -= lr * gb
            self.weights[ci] = w
            self.biases[ci] = b
        self.trained = True
        return self

    def predict_proba(self, features):
        """Per-row probabilities over self.categories, renormalized to 1."""
        if not self.trained:
            raise NotTrained("label model queried before training")
        x = (np.asarray(features, dtype=np.float64) - self.feat_mean) / self.feat_std
        scores = x @ self.weights.T + self.biases
        p = 1.0 / (1.0 + np.exp(-scores))
        return p / np.maximum(p.sum(axis=1, keepdims=True), 1e-12)


def segment_appearance_features(pre):
    """Per-node appearance vector for the label model.

    With a feature-map archive: bilinear sample at the segment centroid
    concatenated with the Lab mean. Fallback: Lab mean + Lab variance +
    frame-normalized centroid.
    """
    g = pre.graph
    h, w = pre.dataset.frame_shape
    mean_lab = np.concatenate([s.mean_lab for s in pre.segs], axis=0)
    if pre.feats is not None:
        maps = pre.feats.maps
        scale = pre.feats.scale
        rows = []
        for t, seg in enumerate(pre.segs):
            cx = seg.centroids[:, 0] / scale
            cy = seg.centroids[:, 1] / scale
            fm = np.moveaxis(maps[t], 0, -1)  # (h', w', C)
            rows.append(flow_mod.bilinear_sample(fm.astype(np.float64), cx, cy))
        sampled = np.concatenate(rows, axis=0)
        return np.concatenate([sampled, mean_lab], axis=1)
    var_lab = np.concatenate([s.var_lab for s in pre.segs], axis=0)
    cents = np.concatenate([s.centroids for s in pre.segs], axis=0)
    norm_cent = cents / np.array([max(w - 1, 1), max(h - 1, 1)], dtype=np.float64)
    return np.concatenate([mean_lab, var_lab, norm_cent], axis=1)


# --- session state ------------------------------------------------------------------

@dataclass
class SessionConfig:
    seed_prop: SeedPropConfig = field(default_factory=SeedPropConfig)
    use_seed_prop: bool = True
    use_global_model: bool = True
    enable_splitting: bool = True
    clamp_annotated: bool = True  # scribbled nodes keep their drawn category
    mrf_lambda: float = 1.0
    mrf_kappa: float = 0.25
    mrf_sigma_c: float = 10.0


@dataclass
class RoundResult:
    round_index: int
    node_probs: np.ndarray  # (V, k+1)
    node_labels: np.ndarray  # (V,)
    prediction_maps: list  # per-frame (h, w) int label maps
    inference_ms: float
    record: dict


class SessionState:
    """One interactive annotation session over a preprocessed video."""

    def __init__(self, pre, num_objects, params=None, cfg=None, rng_seed=0,
                 backend="gnn", video_id=""):
        self.pre = pre  # session-local view; replaced after splits
        self.num_objects = int(num_objects)
        self.params = params
        self.cfg = cfg or SessionConfig()
        self.rng = np.random.default_rng(rng_seed)
        self.backend = backend
        self.video_id = video_id or pre.dataset.id
        self.scribbles = []
        self.seeds = []
        self.label_model = GlobalLabelModel()
        self.prev_probs = None  # (V, k+1)
        self.round_index = 0
        self.cum_time_ms = 0.0
        self.records = []
        self.closed = False

    # -- annotation bookkeeping --

    def _node_at(self, frame, x, y):
        seg = self.pre.segs[frame]
        h, w = seg.labels.shape
        xi = min(max(int(round(x)), 0), w - 1)
        yi = min(max(int(round(y)), 0), h - 1)
        return self.pre.graph.node_id(frame, seg.labels[yi, xi])

    def annotation_tables(self):
        """(ann_hits, prop_hits): (V, k+1) boolean tables of which categories
        annotate each node, rebuilt from the scribble/seed history."""
        v = self.pre.graph.num_nodes
        k = self.num_objects
        ann = np.zeros((v, k + 1), dtype=bool)
        prop = np.zeros((v, k + 1), dtype=bool)
        shape = self.pre.dataset.frame_shape
        for s in self.scribbles:
            raster = rasterize_polyline(s.points, shape)
            seg = self.pre.segs[s.frame].labels
            nodes = self.pre.graph.node_offset[s.frame] + seg[raster[:, 1],
                                                              raster[:, 0]]
            ann[np.unique(nodes), min(s.category, k)] = True
        for sd in self.seeds:
            node = self._node_at(sd.frame, *sd.position)
            table = prop if sd.origin == "propagated" else ann
            table[node, min(sd.category, k)] = True
        return ann, prop

    def annotated_nodes(self):
        """List of (node, category) pairs from all annotations so far."""
        pairs = set()
        shape = self.pre.dataset.frame_shape
        for s in self.scribbles:
            raster = rasterize_polyline(s.points, shape)
            seg = self.pre.segs[s.frame].labels
            nodes = self.pre.graph.node_offset[s.frame] + seg[raster[:, 1],
                                                              raster[:, 0]]
            pairs.update((int(n), s.category) for n in np.unique(nodes))
        for sd in self.seeds:
            pairs.add((self._node_at(sd.frame, *sd.position), sd.category))
        return sorted(pairs)

    # -- feature assembly --

    def build_features(self, fg_subset, ann=None, prop=None, model_probs=None):
        """14-dim node features for one binary (foreground subset) task."""
        if ann is None or prop is None:
            ann, prop = self.annotation_tables()
        fg = sorted(fg_subset)
        k = self.num_objects
        bg = [c for c in range(k + 1) if c not in fg_subset]
        ann_fg = ann[:, fg].any(axis=1).astype(np.float64)
        ann_bg = ann[:, bg].any(axis=1).astype(np.float64)
        prop_fg = prop[:, fg].any(axis=1).astype(np.float64)
        prop_bg = prop[:, bg].any(axis=1).astype(np.float64)

        v = self.pre.graph.num_nodes
        if model_probs is not None:
            cats = self.label_model.categories
            cols = [cats.index(c) for c in fg if c in cats]
            model_col = (model_probs[:, cols].sum(axis=1) if cols
                         else np.full(v, 0.5))
        else:
            model_col = np.full(v, 0.5)
        if self.prev_probs is not None:
            prev_col = self.prev_probs[:, fg].sum(axis=1)
        else:
            prev_col = np.full(v, 0.5)
        return graph_mod.assemble_node_features(
            self.pre.static_node_raw, self.pre.standardizer,
            ann_fg, ann_bg, prop_fg, prop_bg, model_col, prev_col)

    def label_model_probs(self):
        if not (self.cfg.use_global_model and self.label_model.trained):
            return None
        return self.label_model.predict_proba(segment_appearance_features(self.pre))

    # -- conflict-driven segment splitting --

    def _find_conflicts(self):
        """Segments whose annotations (scribbles and seeds) carry >= 2
        categories. Returns {(frame, local_id): {category: [(x, y), ...]}};
        pixels claimed by several categories are dropped."""
        shape = self.pre.dataset.frame_shape
        h, w = shape
        per_seg = {}

        def put(frame, x, y, category):
            x = min(max(int(round(x)), 0), w - 1)
            y = min(max(int(round(y)), 0), h - 1)
            key = (frame, int(self.pre.segs[frame].labels[y, x]))
            per_seg.setdefault(key, {}).setdefault(category, set()).add((x, y))

        for s in self.scribbles:
            for (x, y) in rasterize_polyline(s.points, shape):
                put(s.frame, x, y, s.category)
        for sd in self.seeds:
            put(sd.frame, sd.position[0], sd.position[1], sd.category)

        out = {}
        for key, cats in per_seg.items():
            if len(cats) < 2:
                continue
            claimed = {}
            for c, pts in cats.items():
                for p in pts:
                    claimed.setdefault(p, set()).add(c)
            ambiguous = {p for p, cs in claimed.items() if len(cs) > 1}
            cleaned = {c: sorted(pts - ambiguous) for c, pts in cats.items()}
            cleaned = {c: pts for c, pts in cleaned.items() if pts}
            if len(cleaned) >= 2:
                out[key] = cleaned
        return out

    def apply_splits(self, rebuild_fn):
        """Split conflicted segments with marker watershed, then rebuild the
        session's graph/features through `rebuild_fn(segs) -> new pre`.
        Returns True when anything changed."""
        conflicts = self._find_conflicts()
        if not conflicts or not self.cfg.enable_splitting:
            return False
        changed = False
        new_label_maps = {}
        for (frame, local), cats in sorted(conflicts.items()):
            labels = new_label_maps.get(frame, self.pre.segs[frame].labels.copy())
            mask = labels == local
            markers = [cats[c] for c in sorted(cats)]
            if any(len(m) == 0 for m in markers):
                continue
            gray = gray_from_rgb(self.pre.dataset.frames[frame])
            try:
                part = superpixel.watershed_split(mask, gray, markers)
            except MarkerConflict:
                continue
            n_parts = int(part.max()) + 1
            if n_parts < 2:
                continue
            next_id = int(labels.max()) + 1
            for c in range(1, n_parts):
                labels[part == c] = next_id
                next_id += 1
            new_label_maps[frame] = labels
            changed = True
        if not changed:
            return False

        from .color import rgb_to_lab

        old_graph = self.pre.graph
        old_probs = self.prev_probs
        old_label_maps = [s.labels for s in self.pre.segs]
        new_segs = list(self.pre.segs)
        for frame, labels in new_label_maps.items():
            seg = superpixel.Segmentation(
                labels=labels, grid_interval=self.pre.segs[frame].grid_interval)
            seg.recompute_stats(rgb_to_lab(self.pre.dataset.frames[frame]))
            fw = (self.pre.flows.forward[frame]
                  if frame < len(self.pre.flows.forward) else None)
            bw = self.pre.flows.backward[frame - 1] if frame >= 1 else None
            seg.attach_flow_means(fw, bw)
            new_segs[frame] = seg
        self.pre = rebuild_fn(new_segs)
        if old_probs is not None:
            # split children nest inside their parent, so any pixel of a new
            # segment identifies the old node whose probabilities it inherits
            new_graph = self.pre.graph
            remap = np.zeros(new_graph.num_nodes, dtype=np.int64)
            for t in range(new_graph.num_frames):
                seg_labels = self.pre.segs[t].labels
                n_new = (int(new_graph.node_offset[t + 1])
                         - int(new_graph.node_offset[t]))
                flat_new = seg_labels.ravel()
                first = np.full(n_new, -1, dtype=np.int64)
                seen_order = np.unique(flat_new, return_index=True)
                first[seen_order[0]] = seen_order[1]
                old_local = old_label_maps[t].ravel()[first]
                remap[new_graph.node_offset[t]:new_graph.node_offset[t + 1]] = (
                    old_graph.node_offset[t] + old_local)
            self.prev_probs = old_probs[remap]
        return True

    # -- prediction --

    def predict(self):
        """Full multiclass prediction with the configured backend.
        Returns (probs (V, k+1), labels (V,))."""
        k = self.num_objects
        ann, prop = self.annotation_tables()
        model_probs = self.label_model_probs()
        z = self.pre.edge_feats
        if self.backend == "mrf":
            problem = mrf.build_problem(
                self.pre.graph, self._mrf_unary_probs(model_probs),
                self._node_sizes(), self._node_mean_lab(),
                lam=self.cfg.mrf_lambda, kappa=self.cfg.mrf_kappa,
                sigma_c=self.cfg.mrf_sigma_c)
            labels = mrf.solve(problem)
            probs = np.full((self.pre.graph.num_nodes, k + 1), 1e-3)
            probs[np.arange(len(labels)), labels] = 1.0
            probs /= probs.sum(axis=1, keepdims=True)
            if self.cfg.clamp_annotated:
                probs, labels = self._clamp_scribbled(probs, labels)
            return probs, labels

        def x_builder(c):
            return self.build_features({c}, ann, prop, model_probs)

        probs, labels = gnn_mod.predict_multiclass(
            self.params, self.params.config, self.pre.graph, x_builder, z,
            list(range(1, k + 1)))
        if self.cfg.clamp_annotated:
            probs, labels = self._clamp_scribbled(probs, labels)
        return probs, labels

    def _clamp_scribbled(self, probs, labels):
        """Nodes crossed by scribbles of exactly one category keep that
        category in the output (direct user input wins)."""
        shape = self.pre.dataset.frame_shape
        claims = {}
        for s in self.scribbles:
            raster = rasterize_polyline(s.points, shape)
            seg = self.pre.segs[s.frame].labels
            nodes = self.pre.graph.node_offset[s.frame] + seg[raster[:, 1],
                                                              raster[:, 0]]
            for n in np.unique(nodes):
                claims.setdefault(int(n), set()).add(s.category)
        for n, cats in claims.items():
            if len(cats) == 1:
                c = cats.pop()
                labels[n] = c
                probs[n] = 1e-3
                probs[n, c] = 1.0
                probs[n] /= probs[n].sum()
        return probs, labels

    def _node_sizes(self):
        return np.concatenate([s.counts for s in self.pre.segs])

    def _node_mean_lab(self):
        return np.concatenate([s.mean_lab for s in self.pre.segs], axis=0)

    def _mrf_unary_probs(self, model_probs):
        """(V, k+1) label probabilities for the MRF unaries, combining the
        label model with hard annotation evidence."""
        if model_probs is None:
            raise NotTrained("MRF backend needs a trained label model")
        k = self.num_objects
        v = self.pre.graph.num_nodes
        table = np.full((v, k + 1), 1.0 / (k + 1))
        cats = self.label_model.categories
        for ci, c in enumerate(cats):
            if c <= k:
                table[:, c] = model_probs[:, ci]
        ann, _ = self.annotation_tables()
        for c in range(k + 1):
            hit = ann[:, c]
            table[hit] = 1e-3
            table[hit, c] = 1.0
        return table / table.sum(axis=1, keepdims=True)


def ingest_annotations(session, new_scribbles, rebuild_fn=None):
    """Absorb a scribble submission: increment the round, sample seeds
    (plus background seeds in round 1), propagate them, split conflicted
    segments and retrain the global label model."""
    if session.closed:
        raise SessionClosed("session is closed")
    shape = session.pre.dataset.frame_shape
    frames = {s.frame for s in new_scribbles}
    if len(frames) != 1:
        raise ValueError("a round's scribbles must target exactly one frame")

    session.round_index += 1
    for s in new_scribbles:
        s.validate(shape)
        s.round_index = session.round_index
        session.scribbles.append(s)

    new_seeds = []
    for s in new_scribbles:
        new_seeds.extend(sample_seeds(s, session.cfg.seed_prop, session.rng, shape))
    if session.round_index == 1 and not any(s.category == 0 for s in new_scribbles):
        fg = [s for s in new_scribbles if s.category != 0]
        if fg:
            new_seeds.extend(generate_background_seeds(
                fg, shape, session.cfg.seed_prop, session.rng))
    if session.cfg.use_seed_prop:
        base = len(session.seeds)
        propagated = propagate_seeds(new_seeds, session.pre.flows,
                                     session.cfg.seed_prop)
        for p in propagated:
            p.source_id += base
        session.seeds.extend(new_seeds)
        session.seeds.extend(propagated)
    else:
        session.seeds.extend(new_seeds)

    if rebuild_fn is not None and session.cfg.enable_splitting:
        session.apply_splits(rebuild_fn)

    if session.cfg.use_global_model:
        pairs = session.annotated_nodes()
        cats = sorted({c for _, c in pairs})
        if len(cats) >= 2:
            feats = segment_appearance_features(session.pre)
            x = np.array([feats[n] for n, _ in pairs])
            y = np.array([c for _, c in pairs])
            session.label_model = GlobalLabelModel()
            session.label_model.fit(x, y)


def run_round(session, new_scribbles, rebuild_fn=None, gt_masks=None):
    """Execute one interaction round: seeds, propagation, label model,
    optional conflict splitting, feature refresh and prediction.

    Timing covers scribble receipt to prediction availability; metric
    computation against `gt_masks` happens after the clock stops.
    """
    if session.closed:
        raise SessionClosed("session is closed")
    pre = session.pre

    if not new_scribbles:
        probs = session.prev_probs
        labels = probs.argmax(axis=1) if probs is not None else np.zeros(
            pre.graph.num_nodes, dtype=np.int64)
        maps = graph_mod.labels_to_pixel_masks(pre.graph, pre.segs, labels)
        record = {"round": session.round_index, "frame": None, "scribbles": [],
                  "inference_ms": 0.0, "cum_time_ms": session.cum_time_ms,
                  "video": session.video_id}
        return RoundResult(session.round_index, probs, labels, maps, 0.0, record)

    t_start = time.perf_counter()
    ingest_annotations(session, new_scribbles, rebuild_fn=rebuild_fn)
    probs, labels = session.predict()
    session.prev_probs = probs
    inference_ms = (time.perf_counter() - t_start) * 1000.0
    session.cum_time_ms += inference_ms

    maps = graph_mod.labels_to_pixel_masks(session.pre.graph, session.pre.segs,
                                           labels)
    record = {
        "round": session.round_index,
        "frame": new_scribbles[0].frame,
        "scribbles": [s.to_dict() for s in new_scribbles],
        "inference_ms": inference_ms,
        "cum_time_ms": session.cum_time_ms,
        "video": session.video_id,
    }
    if gt_masks is not None:
        frame_j, frame_f = metrics.score_video_prediction(
            maps, gt_masks, session.num_objects)
        record["frame_j"] = {str(k): v for k, v in frame_j.items()}
        record["frame_f"] = {str(k): v for k, v in frame_f.items()}
    session.records.append(record)
    return RoundResult(session.round_index, probs, labels, maps, inference_ms,
                       record)


# --- snapshots -------------------------------------------------------------------

def snapshot_session(session):
    """JSON-serializable session snapshot for pause/resume."""
    snap = {
        "video_id": session.video_id,
        "num_objects": session.num_objects,
        "backend": session.backend,
        "round_index": session.round_index,
        "cum_time_ms": session.cum_time_ms,
        "scribbles": [s.to_dict() for s in session.scribbles],
        "seeds": [s.to_dict() for s in session.seeds],
        "rng_state": session.rng.bit_generator.state,
        "prev_probs": (None if session.prev_probs is None
                       else session.prev_probs.tolist()),
        "records": session.records,
    }
    return snap


def restore_session(pre, snap, params=None, cfg=None):
    session = SessionState(pre, snap["num_objects"], params=params, cfg=cfg,
                           backend=snap["backend"], video_id=snap["video_id"])
    session.round_index = snap["round_index"]
    session.cum_time_ms = snap["cum_time_ms"]
    session.scribbles = [Scribble.from_dict(d) for d in snap["scribbles"]]
    session.seeds = [SeedPoint.from_dict(d) for d in snap["seeds"]]
    session.rng.bit_generator.state = snap["rng_state"]
    if snap["prev_probs"] is not None:
        session.prev_probs = np.array(snap["prev_probs"])
    session.records = list(snap["records"])
    return session
