"""Orchestration: video preprocessing (flow, segmentation, graph, features)
with an idempotent on-disk cache, the session-pool training loop against the
simulated annotator, and full simulated-session evaluation runs.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
from dataclasses import dataclass, field

import numpy as np

from . import datasets, flow as flow_mod, gnn as gnn_mod, graph as graph_mod
from . import interact, metrics, simuser, superpixel
from .color import gray_from_rgb, rgb_to_lab
from .errors import NothingToAnnotate

CACHE_DIR = "cache"
CACHE_FILE = "preprocessed.npz"
MANIFEST_FILE = "manifest.json"


@dataclass
class EngineConfig:
    slic: superpixel.SlicConfig = field(default_factory=superpixel.SlicConfig)
    graph: graph_mod.GraphConfig = field(default_factory=graph_mod.GraphConfig)
    flow: flow_mod.FlowConfig = field(default_factory=flow_mod.FlowConfig)
    session: interact.SessionConfig = field(default_factory=interact.SessionConfig)
    gnn: gnn_mod.GnnConfig = field(default_factory=gnn_mod.GnnConfig)

    def fingerprint(self):
        def enc(obj):
            return {k: v for k, v in vars(obj).items()
                    if isinstance(v, (int, float, str, bool))}

        blob = json.dumps({
            "slic": enc(self.slic), "graph": enc(self.graph),
            "flow": enc(self.flow),
            "session": enc(self.session) | enc(self.session.seed_prop),
            "gnn": enc(self.gnn),
        }, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()


def synthetic_engine_config(k_target=60, cap=120):
    """Defaults scaled to desk-size synthetic videos (small frames).

    The round-trip gate shrinks with the frame scale: 5 px was chosen for
    full-resolution video; at 48 px frames it would accept any sub-5px
    drift, letting background seeds ride onto slowly moving objects.
    """
    cfg = EngineConfig()
    cfg.slic.k_target = k_target
    cfg.slic.cap = cap
    cfg.graph.tau_abs = 5
    cfg.session.seed_prop.beta = 0.75
    return cfg


@dataclass
class PreprocessedVideo:
    dataset: datasets.VideoDataset
    flows: datasets.FlowArchive
    occl_fw: np.ndarray
    occl_bw: np.ndarray
    segs: list
    graph: graph_mod.SpatioTemporalGraph
    static_node_raw: np.ndarray
    standardizer: tuple
    edge_feats: np.ndarray
    node_gt: np.ndarray | None
    feats: datasets.FeatureMapArchive | None
    config: EngineConfig

    def rebuild_with_segs(self, new_segs):
        """New view with replaced segmentations (after watershed splits).
        The feature standardizer stays frozen at its preprocessing value."""
        g = graph_mod.build_graph(new_segs, self.flows, self.config.graph)
        static = graph_mod.static_node_features(g, new_segs, self.occl_fw,
                                                self.occl_bw)
        node_gt = None
        if self.dataset.gt_masks is not None:
            node_gt = graph_mod.node_majority_labels(g, new_segs,
                                                     self.dataset.gt_masks)
        return PreprocessedVideo(
            dataset=self.dataset, flows=self.flows, occl_fw=self.occl_fw,
            occl_bw=self.occl_bw, segs=new_segs, graph=g,
            static_node_raw=static, standardizer=self.standardizer,
            edge_feats=graph_mod.compute_edge_features(g, new_segs),
            node_gt=node_gt, feats=self.feats, config=self.config)


def _segment_frames(dataset, flows, cfg):
    segs = []
    for t, frame in enumerate(dataset.frames):
        lab = rgb_to_lab(frame)
        seg = superpixel.slic_segment(lab, cfg.slic.k_target,
                                      cfg.slic.compactness,
                                      cfg.slic.iterations)
        edges = superpixel.canny_edges(gray_from_rgb(frame), cfg.slic.canny_low,
                                       cfg.slic.canny_high)
        seg = superpixel.refine_with_borders(seg, edges, cfg.slic.refine_depth,
                                             cfg.slic.cap, cfg.slic.compactness,
                                             lab_image=lab)
        fw = flows.forward[t] if t < len(flows.forward) else None
        bw = flows.backward[t - 1] if t >= 1 else None
        seg.attach_flow_means(fw, bw)
        segs.append(seg)
    return segs


def _assemble(dataset, flows, segs, cfg, feats=None):
    occl_fw, occl_bw = flow_mod.occlusion_maps_for_video(
        flows, dataset.num_frames, dataset.frame_shape)
    g = graph_mod.build_graph(segs, flows, cfg.graph)
    static = graph_mod.static_node_features(g, segs, occl_fw, occl_bw)
    standardizer = graph_mod.feature_standardizer(static)
    node_gt = None
    if dataset.gt_masks is not None:
        node_gt = graph_mod.node_majority_labels(g, segs, dataset.gt_masks)
    return PreprocessedVideo(
        dataset=dataset, flows=flows, occl_fw=occl_fw, occl_bw=occl_bw,
        segs=segs, graph=g, static_node_raw=static, standardizer=standardizer,
        edge_feats=graph_mod.compute_edge_features(g, segs),
        node_gt=node_gt, feats=feats, config=cfg)


def preprocess_in_memory(dataset, flows, cfg=None, feats=None):
    """Preprocess an in-memory dataset (used by tests and the generator)."""
    cfg = cfg or EngineConfig()
    if flows is None:
        flows = flow_mod.estimate_archive_builtin(dataset.frames, cfg.flow)
    flows.validate(dataset.num_frames, dataset.frame_shape)
    segs = _segment_frames(dataset, flows, cfg)
    return _assemble(dataset, flows, segs, cfg, feats=feats)


def preprocess_video(root, cfg=None, use_cache=True, progress=None):
    """Load + preprocess a dataset directory; results cached under
    <root>/cache/. A second call with the same config is a no-op."""
    cfg = cfg or EngineConfig()
    dataset = datasets.load_dataset(root)
    feats = None
    feats_path = os.path.join(root, "feats.vsfm")
    if os.path.exists(feats_path):
        feats = datasets.read_feature_maps(feats_path)
        feats.scale = dataset.frame_shape[0] / feats.maps.shape[2]

    cache_dir = os.path.join(root, CACHE_DIR)
    cache_file = os.path.join(cache_dir, CACHE_FILE)
    manifest_path = os.path.join(cache_dir, MANIFEST_FILE)
    fingerprint = cfg.fingerprint()

    if use_cache and os.path.exists(cache_file) and os.path.exists(manifest_path):
        with open(manifest_path) as fh:
            manifest = json.load(fh)
        if manifest.get("fingerprint") == fingerprint:
            return _load_cache(dataset, cache_file, cfg, feats), manifest

    t0 = time.perf_counter()
    flows = datasets.load_flow_archive(root, dataset.num_frames,
                                       dataset.frame_shape)
    if flows is None:
        flows = flow_mod.estimate_archive_builtin(dataset.frames, cfg.flow)
    segs = _segment_frames(dataset, flows, cfg)
    pre = _assemble(dataset, flows, segs, cfg, feats=feats)
    duration = time.perf_counter() - t0

    if use_cache:
        os.makedirs(cache_dir, exist_ok=True)
        np.savez_compressed(
            cache_file,
            labels=np.stack([s.labels for s in segs]),
            grid_interval=np.array([s.grid_interval for s in segs]),
            flow_fw=np.stack(flows.forward),
            flow_bw=np.stack(flows.backward),
            flow_source=np.array(flows.source),
        )
        manifest = {"fingerprint": fingerprint, "duration_s": duration,
                    "num_frames": dataset.num_frames,
                    "created_at": time.time()}
        with open(manifest_path, "w") as fh:
            json.dump(manifest, fh, indent=2)
    else:
        manifest = {"fingerprint": fingerprint, "duration_s": duration}
    if progress:
        progress(f"preprocessed {dataset.id} in {duration:.1f}s")
    return pre, manifest


def _load_cache(dataset, cache_file, cfg, feats):
    with np.load(cache_file) as data:
        flows = datasets.FlowArchive(
            forward=list(data["flow_fw"]), backward=list(data["flow_bw"]),
            source=str(data["flow_source"]))
        label_stack = data["labels"]
        grid = data["grid_interval"]
    segs = []
    for t in range(dataset.num_frames):
        seg = superpixel.Segmentation(labels=label_stack[t].astype(np.int32),
                                      grid_interval=float(grid[t]))
        seg.recompute_stats(rgb_to_lab(dataset.frames[t]))
        fw = flows.forward[t] if t < len(flows.forward) else None
        bw = flows.backward[t - 1] if t >= 1 else None
        seg.attach_flow_means(fw, bw)
        segs.append(seg)
    return _assemble(dataset, flows, segs, cfg, feats=feats)


# --- simulated sessions -----------------------------------------------------------

def make_session(pre, params=None, rng_seed=0, backend="gnn", cfg=None):
    num_objects = pre.dataset.num_objects or 1
    session_cfg = (cfg or pre.config).session
    return interact.SessionState(pre, num_objects, params=params,
                                 cfg=session_cfg, rng_seed=rng_seed,
                                 backend=backend)


def run_simulated_session(pre, params, rounds=8, rng_seed=0, backend="gnn",
                          session_cfg=None, sim_cfg=None, log_path=None):
    """Drive a full simulated-annotator session; returns (session, records)."""
    gt = pre.dataset.gt_masks
    if gt is None:
        raise NothingToAnnotate("simulated sessions need ground truth")
    session = interact.SessionState(
        pre, pre.dataset.num_objects, params=params,
        cfg=session_cfg or pre.config.session, rng_seed=rng_seed,
        backend=backend)
    sim_cfg = sim_cfg or simuser.SimUserConfig()
    h, w = pre.dataset.frame_shape
    pred_maps = [np.zeros((h, w), dtype=np.int32) for _ in gt]
    for rnd in range(1, rounds + 1):
        frame = simuser.select_worst_frame(pred_maps, gt)
        try:
            scribbles = simuser.synthesize_scribbles(
                frame, pred_maps[frame], gt[frame], rnd, session.rng, sim_cfg)
        except NothingToAnnotate:
            last = session.records[-1] if session.records else None
            if last is not None:
                rec = dict(last)
                rec["round"] = rnd
                rec["inference_ms"] = 0.0
                rec["scribbles"] = []
                session.records.append(rec)
            continue
        result = interact.run_round(session, scribbles,
                                    rebuild_fn=session.pre.rebuild_with_segs,
                                    gt_masks=gt)
        result.record["round"] = rnd
        pred_maps = result.prediction_maps
        if log_path:
            datasets.append_session_log(log_path, result.record)
    return session, session.records


# --- training ----------------------------------------------------------------------

@dataclass
class TrainConfig:
    budget: int = 4000
    lr: float = 1e-3
    pool_size: int = 8
    rounds_per_session: int = 8
    val_interval: int = 100
    val_rounds: int = 2
    feature_dropout: float = 0.15  # robustness to ablated feature groups
    prev_prob_dropout: float = 0.35  # break the copy-previous-round fixed point
    seed: int = 0


def _fresh_session(pre, rng):
    return interact.SessionState(pre, pre.dataset.num_objects,
                                 cfg=pre.config.session,
                                 rng_seed=int(rng.integers(0, 2**31)))


def _session_prediction_maps(session):
    pre = session.pre
    if session.prev_probs is None:
        h, w = pre.dataset.frame_shape
        return [np.zeros((h, w), dtype=np.int32) for _ in pre.dataset.frames]
    labels = session.prev_probs.argmax(axis=1)
    return graph_mod.labels_to_pixel_masks(pre.graph, pre.segs, labels)


def _advance_session(session, params, rng, step, train_cfg):
    """One simulated interaction + one binary training example.

    Returns (batch, done) where batch = (graph, x, z, targets) or None when
    the session produced nothing to train on.
    """
    pre = session.pre
    gt = pre.dataset.gt_masks
    pred_maps = _session_prediction_maps(session)
    rnd = session.round_index + 1
    frame = simuser.select_worst_frame(pred_maps, gt)
    try:
        scribbles = simuser.synthesize_scribbles(
            frame, pred_maps[frame], gt[frame], rnd, session.rng)
    except NothingToAnnotate:
        return None, True
    interact.ingest_annotations(session, scribbles,
                                rebuild_fn=session.pre.rebuild_with_segs)
    pre = session.pre  # splitting may have replaced the view

    k = session.num_objects
    if k >= 2:
        fg_subset, _ = interact.partition_labels(range(1, k + 1), session.rng)
    else:
        fg_subset = {1}
    ann, prop = session.annotation_tables()
    model_probs = session.label_model_probs()
    x = session.build_features(fg_subset, ann, prop, model_probs)
    if train_cfg.feature_dropout > 0:
        if rng.random() < train_cfg.feature_dropout:
            x[:, graph_mod.NF_PROP_FG] = 0.0
            x[:, graph_mod.NF_PROP_BG] = 0.0
        if rng.random() < train_cfg.feature_dropout:
            x[:, graph_mod.NF_MODEL_PROB] = 0.5
    if rng.random() < train_cfg.prev_prob_dropout:
        x[:, graph_mod.NF_PREV_PROB] = 0.5
    targets = np.isin(pre.node_gt, sorted(fg_subset)).astype(np.float64)
    batch = (pre.graph, x, pre.edge_feats, targets)

    # advance the session with a full multiclass prediction
    session.params = params
    probs, _ = session.predict()
    session.prev_probs = probs
    done = session.round_index >= train_cfg.rounds_per_session
    return batch, done


def validation_score(pres, params, rounds=2, rng_seed=12345):
    scores = []
    for pre in pres:
        _, records = run_simulated_session(pre, params, rounds=rounds,
                                           rng_seed=rng_seed)
        report = metrics.evaluate_session(records)
        scores.append(report["round_means"][-1]["mean_j"])
    return float(np.mean(scores))


def train_model(train_pres, val_pres, gnn_config, train_cfg=None, log=None):
    """Session-pool training against the simulated user.

    Keeps the checkpoint with the best validation mean J. Returns
    (best_params, history).
    """
    train_cfg = train_cfg or TrainConfig()
    rng = np.random.default_rng(train_cfg.seed)
    # float32 keeps the training hot path memory-bound ops cheap; gradient
    # verification tests run their own float64 tapes
    params = gnn_mod.init_params(gnn_config, seed=train_cfg.seed,
                                 dtype=np.float32)
    opt = gnn_mod.AdamState()
    pool = []
    for i in range(min(train_cfg.pool_size, max(len(train_pres), 1))):
        pool.append(_fresh_session(train_pres[i % len(train_pres)], rng))
    history = []
    best_params = params.copy()
    best_val = -np.inf

    step = 0
    while step < train_cfg.budget:
        idx = int(rng.integers(len(pool)))
        session = pool[idx]
        batch, done = _advance_session(session, params, rng, step, train_cfg)
        if batch is not None:
            loss = gnn_mod.train_step(params, opt, batch, lr=train_cfg.lr,
                                      rng_seed=step)
            history.append({"step": step, "loss": loss})
            step += 1
        if done or batch is None:
            src = train_pres[int(rng.integers(len(train_pres)))]
            pool[idx] = _fresh_session(src, rng)
        if batch is not None and val_pres and step % train_cfg.val_interval == 0:
            val = validation_score(val_pres, params,
                                   rounds=train_cfg.val_rounds)
            history.append({"step": step, "val_mean_j": val})
            if log:
                log(f"step {step}: loss {loss:.4f} val J {val:.4f}")
            if val > best_val:
                best_val = val
                best_params = params.copy()
    if not val_pres or best_val == -np.inf:
        best_params = params
    return best_params, history


# --- evaluation runs ---------------------------------------------------------------

def evaluate_videos(pres, params, rounds=8, seeds=(0,), backend="gnn",
                    use_seed_prop=True, use_global_model=True, log_dir=None):
    """Simulated-session evaluation over videos x seeds with ablation flags.
    Returns (rows, summary)."""
    import copy

    all_rows = []
    per_video = {}
    for pre in pres:
        session_cfg = copy.deepcopy(pre.config.session)
        session_cfg.use_seed_prop = use_seed_prop
        session_cfg.use_global_model = use_global_model
        for seed in seeds:
            log_path = None
            if log_dir:
                os.makedirs(log_dir, exist_ok=True)
                log_path = os.path.join(
                    log_dir, f"{pre.dataset.id}_seed{seed}_{backend}.jsonl")
                if os.path.exists(log_path):
                    os.remove(log_path)
            _, records = run_simulated_session(
                pre, params, rounds=rounds, rng_seed=seed, backend=backend,
                session_cfg=session_cfg, log_path=log_path)
            report = metrics.evaluate_session(records)
            for row in report["rows"]:
                row["backend"] = backend
                row["seed"] = seed
            all_rows.extend(report["rows"])
            per_video.setdefault(pre.dataset.id, []).append({
                "seed": seed,
                "j_at_2": report["j_at_2"],
                "j_at_8": report["j_at_8"],
                "auc_j": report["auc_j"],
                "auc_jf": report["auc_jf"],
                "round_means": report["round_means"],
            })
    mean_j2 = np.mean([r["j_at_2"] for rs in per_video.values() for r in rs
                       if r["j_at_2"] is not None] or [np.nan])
    mean_j8 = np.mean([r["j_at_8"] for rs in per_video.values() for r in rs
                       if r["j_at_8"] is not None] or [np.nan])
    summary = {
        "backend": backend,
        "use_seed_prop": use_seed_prop,
        "use_global_model": use_global_model,
        "rounds": rounds,
        "per_video": per_video,
        "mean_j_at_2": None if np.isnan(mean_j2) else float(mean_j2),
        "mean_j_at_8": None if np.isnan(mean_j8) else float(mean_j8),
    }
    return all_rows, summary
