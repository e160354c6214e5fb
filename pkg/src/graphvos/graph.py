"""Spatio-temporal graph over per-frame segmentations: spatial edges from
pixel-border adjacency, causal edges from forward-flow warp overlap, plus the
14-dim node features and 9-dim directed-edge features consumed by the network.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FrameMismatch

KIND_SPATIAL = 0
KIND_CAUSAL = 1

NODE_FEATURE_DIM = 14
EDGE_FEATURE_DIM = 9

# node feature layout
NF_OCCL_FW = 0
NF_OCCL_BW = 1
NF_LAB_MEAN = slice(2, 5)
NF_LAB_VAR = slice(5, 8)
NF_ANN_FG = 8
NF_ANN_BG = 9
NF_PROP_FG = 10
NF_PROP_BG = 11
NF_MODEL_PROB = 12
NF_PREV_PROB = 13
STATIC_COLS = slice(0, 8)
ZSCORE_COLS = slice(2, 8)


@dataclass
class GraphConfig:
    tau_abs: int = 10  # minimum warped-pixel overlap for a causal edge
    tau_rel: float = 0.05  # ... relative to the source segment size


@dataclass
class SpatioTemporalGraph:
    frame_of: np.ndarray  # (V,) frame index per node
    local_id: np.ndarray  # (V,) segment id within its frame
    node_offset: np.ndarray  # (T+1,) node id range of frame t
    src: np.ndarray  # (E,) directed edges, canonical (dst, src, kind) order
    dst: np.ndarray
    kind: np.ndarray  # (E,) KIND_SPATIAL | KIND_CAUSAL
    causal_overlap: np.ndarray  # (E,) warp overlap pixel count (0 on spatial)

    @property
    def num_nodes(self):
        return len(self.frame_of)

    @property
    def num_edges(self):
        return len(self.src)

    @property
    def num_frames(self):
        return len(self.node_offset) - 1

    def node_id(self, frame, local):
        return int(self.node_offset[frame]) + int(local)

    def undirected_pairs(self):
        """Each symmetric pair once: rows (src, dst, kind, overlap), src < dst."""
        sel = self.src < self.dst
        return (self.src[sel], self.dst[sel], self.kind[sel],
                self.causal_overlap[sel])


def _spatial_pairs(labels):
    """Unique ordered pairs of 4-adjacent different segment ids in a frame."""
    right = np.stack([labels[:, :-1].ravel(), labels[:, 1:].ravel()], axis=1)
    down = np.stack([labels[:-1, :].ravel(), labels[1:, :].ravel()], axis=1)
    pairs = np.concatenate([right, down], axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]
    both = np.concatenate([pairs, pairs[:, ::-1]], axis=0)
    return np.unique(both, axis=0)


def _warp_overlap_counts(labels_a, labels_b, flow_fw):
    """Pixel counts c[a, b]: pixels of segment a landing in b under the
    nearest-integer forward warp."""
    h, w = labels_a.shape
    ys, xs = np.mgrid[0:h, 0:w]
    fl = np.asarray(flow_fw, dtype=np.float64)
    tx = np.rint(xs + fl[..., 0]).astype(np.int64)
    ty = np.rint(ys + fl[..., 1]).astype(np.int64)
    ok = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    a = labels_a[ok]
    b = labels_b[ty[ok], tx[ok]]
    nb = int(labels_b.max()) + 1
    codes = a.astype(np.int64) * nb + b
    counts = np.bincount(codes, minlength=(int(labels_a.max()) + 1) * nb)
    return counts.reshape(-1, nb)


def build_graph(segs, flows, cfg=None):
    """Assemble the full spatio-temporal graph.

    Causal edge A(t) -> B(t+1) exists iff at least max(tau_abs, tau_rel*|A|)
    of A's pixels warp into B; the reverse direction is added symmetrically.
    """
    cfg = cfg or GraphConfig()
    t_frames = len(segs)
    if flows is not None and len(flows.forward) != t_frames - 1:
        raise FrameMismatch(
            f"{t_frames} frames but {len(flows.forward)} forward flow fields")

    seg_counts = [s.num_segments for s in segs]
    node_offset = np.concatenate([[0], np.cumsum(seg_counts)]).astype(np.int64)
    v = int(node_offset[-1])
    frame_of = np.empty(v, dtype=np.int32)
    local_id = np.empty(v, dtype=np.int32)
    for t in range(t_frames):
        frame_of[node_offset[t]:node_offset[t + 1]] = t
        local_id[node_offset[t]:node_offset[t + 1]] = np.arange(seg_counts[t])

    src_list, dst_list, kind_list, ovl_list = [], [], [], []
    for t in range(t_frames):
        pairs = _spatial_pairs(segs[t].labels)
        if len(pairs):
            src_list.append(pairs[:, 0] + node_offset[t])
            dst_list.append(pairs[:, 1] + node_offset[t])
            kind_list.append(np.full(len(pairs), KIND_SPATIAL, dtype=np.int8))
            ovl_list.append(np.zeros(len(pairs), dtype=np.int64))

    for t in range(t_frames - 1):
        counts = _warp_overlap_counts(segs[t].labels, segs[t + 1].labels,
                                      flows.forward[t])
        sizes = segs[t].counts
        thresh = np.maximum(cfg.tau_abs, cfg.tau_rel * sizes)[:, None]
        a_idx, b_idx = np.nonzero(counts >= thresh)
        if len(a_idx):
            a_glob = a_idx + node_offset[t]
            b_glob = b_idx + node_offset[t + 1]
            ovl = counts[a_idx, b_idx]
            src_list.append(np.concatenate([a_glob, b_glob]))
            dst_list.append(np.concatenate([b_glob, a_glob]))
            kind_list.append(np.full(2 * len(a_idx), KIND_CAUSAL, dtype=np.int8))
            ovl_list.append(np.concatenate([ovl, ovl]))

    if src_list:
        src = np.concatenate(src_list).astype(np.int64)
        dst = np.concatenate(dst_list).astype(np.int64)
        kind = np.concatenate(kind_list)
        ovl = np.concatenate(ovl_list)
    else:
        src = np.zeros(0, dtype=np.int64)
        dst = np.zeros(0, dtype=np.int64)
        kind = np.zeros(0, dtype=np.int8)
        ovl = np.zeros(0, dtype=np.int64)

    order = np.lexsort((kind, src, dst))
    return SpatioTemporalGraph(frame_of=frame_of, local_id=local_id,
                               node_offset=node_offset,
                               src=src[order], dst=dst[order],
                               kind=kind[order], causal_overlap=ovl[order])


# --- features --------------------------------------------------------------------

def static_node_features(graph, segs, occl_fw, occl_bw):
    """Raw static columns [0..7]: occlusion fractions, Lab mean, Lab variance.
    Computed once per video and cached by the caller."""
    v = graph.num_nodes
    out = np.zeros((v, 8), dtype=np.float64)
    for t, seg in enumerate(segs):
        sl = slice(int(graph.node_offset[t]), int(graph.node_offset[t + 1]))
        flat = seg.labels.ravel()
        n = seg.num_segments
        safe = np.maximum(seg.counts, 1).astype(np.float64)
        out[sl, NF_OCCL_FW] = np.bincount(
            flat, weights=occl_fw[t].ravel().astype(np.float64), minlength=n) / safe
        out[sl, NF_OCCL_BW] = np.bincount(
            flat, weights=occl_bw[t].ravel().astype(np.float64), minlength=n) / safe
        out[sl, NF_LAB_MEAN] = seg.mean_lab
        out[sl, NF_LAB_VAR] = seg.var_lab
    return out


def feature_standardizer(static_raw):
    """Per-video mean/std of the z-scored columns (Lab mean and variance)."""
    mean = static_raw[:, ZSCORE_COLS].mean(axis=0)
    std = static_raw[:, ZSCORE_COLS].std(axis=0)
    return mean, np.maximum(std, 1e-6)


def assemble_node_features(static_raw, standardizer, ann_fg, ann_bg,
                           prop_fg, prop_bg, model_prob, prev_prob):
    """Combine cached static columns with the per-round dynamic columns.

    Dynamic inputs are per-node vectors already remapped to the current
    binary (foreground subset) task.
    """
    v = len(static_raw)
    x = np.zeros((v, NODE_FEATURE_DIM), dtype=np.float64)
    x[:, STATIC_COLS] = static_raw
    mean, std = standardizer
    x[:, ZSCORE_COLS] = (x[:, ZSCORE_COLS] - mean) / std
    x[:, NF_ANN_FG] = ann_fg
    x[:, NF_ANN_BG] = ann_bg
    x[:, NF_PROP_FG] = prop_fg
    x[:, NF_PROP_BG] = prop_bg
    x[:, NF_MODEL_PROB] = model_prob
    x[:, NF_PREV_PROB] = prev_prob
    return x


def compute_edge_features(graph, segs):
    """Directed-edge features: |delta Lab mean| (3), signed delta of mean
    forward and backward flow (4), one-hot edge kind (2)."""
    mean_lab = np.concatenate([s.mean_lab for s in segs], axis=0)
    flow_fw = np.concatenate([s.mean_flow_fw for s in segs], axis=0)
    flow_bw = np.concatenate([s.mean_flow_bw for s in segs], axis=0)
    s, d = graph.src, graph.dst
    z = np.zeros((graph.num_edges, EDGE_FEATURE_DIM), dtype=np.float64)
    z[:, 0:3] = np.abs(mean_lab[s] - mean_lab[d])
    z[:, 3:5] = flow_fw[s] - flow_fw[d]
    z[:, 5:7] = flow_bw[s] - flow_bw[d]
    z[:, 7] = graph.kind == KIND_SPATIAL
    z[:, 8] = graph.kind == KIND_CAUSAL
    return z


def node_majority_labels(graph, segs, gt_masks):
    """Per-node majority ground-truth category (for training/evaluation)."""
    v = graph.num_nodes
    out = np.zeros(v, dtype=np.int32)
    n_cat = int(max(int(m.max()) for m in gt_masks)) + 1
    for t, seg in enumerate(segs):
        flat = seg.labels.ravel()
        gt = np.asarray(gt_masks[t]).ravel()
        n = seg.num_segments
        votes = np.zeros((n, n_cat), dtype=np.int64)
        np.add.at(votes, (flat, gt), 1)
        sl = slice(int(graph.node_offset[t]), int(graph.node_offset[t + 1]))
        out[sl] = votes.argmax(axis=1)
    return out


def labels_to_pixel_masks(graph, segs, node_labels):
    """Render per-node labels back to per-frame pixel label maps."""
    out = []
    for t, seg in enumerate(segs):
        sl = slice(int(graph.node_offset[t]), int(graph.node_offset[t + 1]))
        out.append(node_labels[sl][seg.labels].astype(np.int32))
    return out
