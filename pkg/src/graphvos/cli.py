"""Command-line driver: dataset preprocessing, training against the
simulated annotator, benchmark-style evaluation with ablation flags,
synthetic-data generation and the HTTP service.

Exit codes: 0 success, 2 configuration error, 1 runtime error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import gnn, metrics, pipeline, synthetic
from .errors import GraphVosError


def _engine_config(args):
    cfg = pipeline.EngineConfig()
    if getattr(args, "segments_per_frame", None):
        cfg.slic.k_target = args.segments_per_frame
        cfg.slic.cap = max(cfg.slic.cap, args.segments_per_frame)
    if getattr(args, "segment_cap", None):
        cfg.slic.cap = args.segment_cap
    if getattr(args, "causal_min_overlap", None):
        cfg.graph.tau_abs = args.causal_min_overlap
    return cfg


def _video_dirs(root):
    """Sorted list of dataset directories (a single video or a directory of
    video subdirectories)."""
    if os.path.isdir(os.path.join(root, "frames")):
        return [root]
    subs = [os.path.join(root, d) for d in sorted(os.listdir(root))
            if os.path.isdir(os.path.join(root, d, "frames"))]
    if not subs:
        raise GraphVosError(f"no dataset directories under {root}")
    return subs


def cmd_preprocess(args):
    cfg = _engine_config(args)
    for root in _video_dirs(args.dataset):
        _, manifest = pipeline.preprocess_video(root, cfg,
                                                use_cache=not args.no_cache)
        print(f"{root}: {manifest['duration_s']:.2f}s "
              f"(fingerprint {manifest['fingerprint'][:12]})")
    return 0


def cmd_synth(args):
    spec = synthetic.default_synth_spec(
        width=args.width, height=args.height, num_frames=args.frames,
        num_objects=args.objects, occluder=args.occluder, noise=args.noise,
        seed=args.seed)
    synthetic.generate_synthetic(spec, args.out)
    print(f"wrote {args.frames} frames ({args.objects} objects) to {args.out}")
    return 0


def cmd_train(args):
    cfg = _engine_config(args)
    dirs = _video_dirs(args.dataset)
    if args.subset:
        dirs = dirs[:args.subset]
    n_val = max(1, round(len(dirs) * 0.25)) if len(dirs) > 1 else 0
    train_dirs = dirs[:len(dirs) - n_val] if n_val else dirs
    val_dirs = dirs[len(dirs) - n_val:] if n_val else []
    print(f"training on {len(train_dirs)} videos, validating on {len(val_dirs)}")

    train_pres = [pipeline.preprocess_video(d, cfg)[0] for d in train_dirs]
    val_pres = [pipeline.preprocess_video(d, cfg)[0] for d in val_dirs]
    tc = pipeline.TrainConfig(budget=args.budget, lr=args.lr, seed=args.seed,
                              pool_size=args.pool_size,
                              val_interval=args.val_interval)
    params, history = pipeline.train_model(train_pres, val_pres, cfg.gnn, tc,
                                           log=print)
    gnn.save_checkpoint(args.out, params)
    hist_path = args.out + ".history.json"
    with open(hist_path, "w") as fh:
        json.dump(history, fh)
    print(f"checkpoint written to {args.out}")
    return 0


def cmd_eval(args):
    cfg = _engine_config(args)
    dirs = _video_dirs(args.dataset)
    pres = [pipeline.preprocess_video(d, cfg)[0] for d in dirs]
    params = gnn.load_checkpoint(args.checkpoint) if args.checkpoint else None
    if args.backend == "gnn" and params is None:
        print("error: --checkpoint required for the gnn backend",
              file=sys.stderr)
        return 2
    os.makedirs(args.out_dir, exist_ok=True)
    rows, summary = pipeline.evaluate_videos(
        pres, params, rounds=args.rounds, seeds=tuple(args.seeds),
        backend=args.backend,
        use_seed_prop=not args.no_seed_prop,
        use_global_model=not args.no_global_model,
        log_dir=os.path.join(args.out_dir, "logs"))
    metrics.write_report_csv(os.path.join(args.out_dir, "report.csv"), rows)
    metrics.write_report_json(os.path.join(args.out_dir, "summary.json"),
                              summary)
    print(f"mean J@2 {summary['mean_j_at_2']}, "
          f"mean J@{args.rounds} {summary['mean_j_at_8']}")
    print(f"reports in {args.out_dir}")
    return 0


def cmd_serve(args):
    import uvicorn

    from .service import create_app

    cfg = _engine_config(args)
    params = gnn.load_checkpoint(args.checkpoint) if args.checkpoint else None
    app = create_app(cfg, params=params, data_root=args.data_root)
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="graphvos",
        description="Interactive video object segmentation on superpixel graphs")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--segments-per-frame", type=int, default=None)
        p.add_argument("--segment-cap", type=int, default=None)
        p.add_argument("--causal-min-overlap", type=int, default=None)

    p = sub.add_parser("preprocess", help="cache flow/segmentation/graph")
    p.add_argument("--dataset", required=True)
    p.add_argument("--no-cache", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_preprocess)

    p = sub.add_parser("synth", help="generate a synthetic dataset")
    p.add_argument("--out", required=True)
    p.add_argument("--width", type=int, default=48)
    p.add_argument("--height", type=int, default=48)
    p.add_argument("--frames", type=int, default=20)
    p.add_argument("--objects", type=int, default=2)
    p.add_argument("--noise", type=float, default=2.0)
    p.add_argument("--occluder", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_synth)

    p = sub.add_parser("train", help="train against the simulated annotator")
    p.add_argument("--dataset", required=True,
                   help="directory of video subdirectories (or one video)")
    p.add_argument("--out", required=True, help="checkpoint path (.vsgn)")
    p.add_argument("--budget", type=int, default=4000,
                   help="training samples (accuracy saturates around 4000)")
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--pool-size", type=int, default=8)
    p.add_argument("--val-interval", type=int, default=100)
    p.add_argument("--subset", type=int, default=None,
                   help="train on only the first N videos")
    common(p)
    p.set_defaults(fn=cmd_train)

    p = sub.add_parser("eval", help="simulated-annotator benchmark runs")
    p.add_argument("--dataset", required=True)
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--rounds", type=int, default=8)
    p.add_argument("--seeds", type=int, nargs="+", default=[0])
    p.add_argument("--backend", choices=["gnn", "mrf"], default="gnn")
    p.add_argument("--no-seed-prop", action="store_true")
    p.add_argument("--no-global-model", action="store_true")
    common(p)
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("serve", help="run the HTTP session service")
    p.add_argument("--data-root", required=True,
                   help="directory holding dataset subdirectories")
    p.add_argument("--checkpoint", default=None)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8008)
    common(p)
    p.set_defaults(fn=cmd_serve)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except GraphVosError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
