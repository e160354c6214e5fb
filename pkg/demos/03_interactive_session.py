"""Train a small model against the simulated annotator, then run a full
8-round interactive session and print the quality curve.

Takes a few minutes on a laptop; lower `budget` for a quicker look.
"""

import numpy as np

from graphvos import datasets, metrics, pipeline, synthetic


def make_pre(seed, occluder=False, noise=7.0, contrast=1.0):
    spec = synthetic.default_synth_spec(occluder=occluder, seed=seed,
                                        noise=noise, contrast=contrast)
    frames, masks, flows = synthetic.render_synthetic(spec)
    ds = datasets.VideoDataset(id=f"synth{seed}", frames=frames,
                               gt_masks=masks)
    cfg = pipeline.synthetic_engine_config(k_target=40, cap=70)
    return pipeline.preprocess_in_memory(ds, flows, cfg)


train_pres = [make_pre(s, occluder=(s % 2 == 0), noise=7.0 + 2 * (s % 3),
                       contrast=1.0 - 0.15 * (s % 3)) for s in range(5)]
val_pres = [make_pre(100, noise=9.0, contrast=0.8)]

tc = pipeline.TrainConfig(budget=250, lr=3e-3, pool_size=5, val_interval=50,
                          seed=0)
cfg = pipeline.synthetic_engine_config()
params, history = pipeline.train_model(train_pres, val_pres, cfg.gnn, tc,
                                       log=print)
print(f"trained parameters: {params.count_trainable()}")

test_pre = make_pre(200, occluder=True, noise=8.0, contrast=0.7)
_, records = pipeline.run_simulated_session(test_pre, params, rounds=8,
                                            rng_seed=0)
report = metrics.evaluate_session(records)
print("\nround  mean J   mean F   cumulative ms")
for rm in report["round_means"]:
    print(f"{rm['round']:>5}  {rm['mean_j']:.4f}  {rm['mean_f']:.4f}  "
          f"{rm['cum_time_ms']:>10.1f}")
print(f"\nAUC(J) = {report['auc_j']:.4f}   AUC(J&F) = {report['auc_jf']:.4f}")
