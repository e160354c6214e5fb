import numpy as np
import pytest

from graphvos import datasets, pipeline, synthetic
from graphvos.graph import SpatioTemporalGraph


def toy_graph(num_nodes, edges, kinds=None):
    """Single-frame graph from an explicit directed edge list."""
    src = np.array([e[0] for e in edges], dtype=np.int64)
    dst = np.array([e[1] for e in edges], dtype=np.int64)
    kind = (np.zeros(len(edges), dtype=np.int8) if kinds is None
            else np.asarray(kinds, dtype=np.int8))
    order = np.lexsort((kind, src, dst))
    return SpatioTemporalGraph(
        frame_of=np.zeros(num_nodes, dtype=np.int32),
        local_id=np.arange(num_nodes, dtype=np.int32),
        node_offset=np.array([0, num_nodes], dtype=np.int64),
        src=src[order], dst=dst[order], kind=kind[order],
        causal_overlap=np.zeros(len(edges), dtype=np.int64))


def synthetic_pre(seed=3, occluder=True, k_target=40, cap=70, **spec_kw):
    spec = synthetic.default_synth_spec(occluder=occluder, seed=seed, **spec_kw)
    frames, masks, flows = synthetic.render_synthetic(spec)
    ds = datasets.VideoDataset(id=f"synth{seed}", frames=frames, gt_masks=masks)
    cfg = pipeline.synthetic_engine_config(k_target=k_target, cap=cap)
    return pipeline.preprocess_in_memory(ds, flows, cfg)


def training_suite_pre(seed, occluder=False):
    """Mixed-difficulty training videos (noise/contrast vary with seed)."""
    return synthetic_pre(seed=seed, occluder=occluder,
                         noise=7.0 + 2 * (seed % 3),
                         contrast=1.0 - 0.15 * (seed % 3))


@pytest.fixture(scope="session")
def pre_occluded():
    """One preprocessed synthetic video, shared read-only by tests."""
    return synthetic_pre(seed=3, occluder=True)


@pytest.fixture(scope="session")
def trained_setup():
    """A trained model with its training/validation videos (shared by the
    session tests and the acceptance suite; trained once per test run)."""
    import time

    t0 = time.perf_counter()
    train_pres = [training_suite_pre(s, occluder=(s % 2 == 0))
                  for s in range(5)]
    val_pres = [synthetic_pre(seed=100, occluder=False, noise=9.0,
                              contrast=0.8)]
    cfg = pipeline.synthetic_engine_config()
    tc = pipeline.TrainConfig(budget=250, lr=3e-3, pool_size=5,
                              val_interval=50, seed=0)
    params, history = pipeline.train_model(train_pres, val_pres, cfg.gnn, tc)
    return {"params": params, "train_pres": train_pres, "val_pres": val_pres,
            "train_cfg": tc, "wall_time_s": time.perf_counter() - t0,
            "history": history}
