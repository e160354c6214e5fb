"""Segmentation quality metrics and session reporting: per-object Jaccard,
tolerant boundary F-measure, step-integrated AUC over elapsed time, and
session-log evaluation with CSV/JSON emission.
"""

from __future__ import annotations

import csv
import json
import math

import numpy as np
from scipy import ndimage

from .errors import (
    DimensionMismatch,
    EmptyCurve,
    LogCorrupt,
    NonMonotonicTime,
)

# Published reference scores for side-by-side comparison in reports. These are
# informational only; no test asserts them (reaching them needs the original
# benchmark data and pretrained feature extractors).
REFERENCE_SCORES = {
    "gnn_auc_j": 0.735,
    "gnn_auc_jf": 0.764,
    "gnn_j_at_2": 0.622,
    "gnn_j_at_8": 0.741,
    "gnn_no_sp_j_at_2": 0.570,
    "gnn_no_sp_j_at_8": 0.703,
    "gnn_no_glm_j_at_2": 0.485,
    "gnn_no_glm_j_at_8": 0.712,
    "gnn_no_sp_no_glm_j_at_2": 0.209,
    "gnn_no_sp_no_glm_j_at_8": 0.639,
    "mrf_j_at_2": 0.295,
    "mrf_j_at_8": 0.419,
    "train_subset_15_j_at_2": 0.615,
    "train_subset_15_j_at_8": 0.728,
    "train_subset_5_j_at_2": 0.604,
    "train_subset_5_j_at_8": 0.702,
}


def jaccard(pred_mask, gt_mask):
    """Intersection over union; 1.0 when both masks are empty."""
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"{pred.shape} vs {gt.shape}")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def _boundary(mask):
    """Mask pixels 4-adjacent to non-mask; outside the image counts as
    non-mask, so pixels on the image border are boundary."""
    mask = np.asarray(mask, dtype=bool)
    padded = np.pad(mask, 1, mode="constant")
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1]
                & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~interior


def default_boundary_tolerance(shape):
    return math.ceil(0.008 * math.hypot(*shape))


def boundary_f(pred_mask, gt_mask, tol=None):
    """Boundary F-measure with tolerant matching.

    A boundary pixel matches iff it lies within `tol` (Euclidean) of any
    opposing boundary pixel. F = 2PR/(P+R); 0 when P+R = 0; 1 when both
    boundaries are empty.
    """
    pred = np.asarray(pred_mask, dtype=bool)
    gt = np.asarray(gt_mask, dtype=bool)
    if pred.shape != gt.shape:
        raise DimensionMismatch(f"{pred.shape} vs {gt.shape}")
    if tol is None:
        tol = default_boundary_tolerance(pred.shape)
    pb = _boundary(pred)
    gb = _boundary(gt)
    if not pb.any() and not gb.any():
        return 1.0
    if not pb.any() or not gb.any():
        return 0.0
    d_to_gt = ndimage.distance_transform_edt(~gb)
    d_to_pred = ndimage.distance_transform_edt(~pb)
    precision = float((d_to_gt[pb] <= tol).mean())
    recall = float((d_to_pred[gb] <= tol).mean())
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def auc_over_time(curve, t_max):
    """Normalized area under a step curve: value 0 before the first point,
    each value held until the next point, the last value held to t_max."""
    if not curve:
        raise EmptyCurve("empty quality curve")
    times = [float(t) for t, _ in curve]
    values = [float(v) for _, v in curve]
    if any(t < 0 for t in times):
        raise NonMonotonicTime("negative time")
    if any(b <= a for a, b in zip(times, times[1:])):
        raise NonMonotonicTime("times must be strictly increasing")
    area = 0.0
    for i, (t, v) in enumerate(zip(times, values)):
        if t >= t_max:
            break
        t_next = min(times[i + 1], t_max) if i + 1 < len(times) else t_max
        area += v * (t_next - t)
    return area / t_max


def multiclass_frame_scores(pred_map, gt_map, num_objects, tol=None):
    """Per-object J and F for one frame; lists indexed by object-1."""
    js, fs = [], []
    for obj in range(1, num_objects + 1):
        js.append(jaccard(pred_map == obj, gt_map == obj))
        fs.append(boundary_f(pred_map == obj, gt_map == obj, tol=tol))
    return js, fs


def score_video_prediction(pred_maps, gt_maps, num_objects, tol=None):
    """frame_j[obj][t], frame_f[obj][t] for a full-video prediction."""
    frame_j = {obj: [] for obj in range(1, num_objects + 1)}
    frame_f = {obj: [] for obj in range(1, num_objects + 1)}
    for pred, gt in zip(pred_maps, gt_maps):
        js, fs = multiclass_frame_scores(pred, gt, num_objects, tol=tol)
        for i, obj in enumerate(range(1, num_objects + 1)):
            frame_j[obj].append(js[i])
            frame_f[obj].append(fs[i])
    return frame_j, frame_f


def evaluate_session(records, t_max=None):
    """Evaluate a replayable session log (list of round records).

    Each record needs: round, inference_ms, cum_time_ms, frame_j and frame_f
    (mapping object id -> per-frame scores). Returns a report dict with rows
    (video, object, frame, round, j, f), per-round means, J@2/J@8 and AUCs.
    """
    if not records:
        raise LogCorrupt("empty session log")
    rows = []
    round_means = []
    curve_j, curve_jf = [], []
    for rec in records:
        try:
            rnd = rec["round"]
            frame_j = rec["frame_j"]
            frame_f = rec["frame_f"]
            cum_s = rec["cum_time_ms"] / 1000.0
            video = rec.get("video", "")
        except (KeyError, TypeError) as exc:
            raise LogCorrupt(f"bad round record: {exc}") from exc
        all_j, all_f = [], []
        for obj in sorted(frame_j, key=lambda k: int(k)):
            for t, (j, f) in enumerate(zip(frame_j[obj], frame_f[obj])):
                rows.append({"video": video, "object": int(obj), "frame": t,
                             "round": rnd, "j": j, "f": f})
            all_j.extend(frame_j[obj])
            all_f.extend(frame_f[obj])
        mean_j = float(np.mean(all_j))
        mean_f = float(np.mean(all_f))
        round_means.append({"round": rnd, "mean_j": mean_j, "mean_f": mean_f,
                            "cum_time_ms": rec["cum_time_ms"]})
        if curve_j and curve_j[-1][0] == cum_s:
            # zero-duration rounds (nothing left to annotate) collapse onto
            # the previous curve point
            curve_j[-1] = (cum_s, mean_j)
            curve_jf[-1] = (cum_s, 0.5 * (mean_j + mean_f))
        else:
            curve_j.append((cum_s, mean_j))
            curve_jf.append((cum_s, 0.5 * (mean_j + mean_f)))

    if t_max is None:
        t_max = max(2.0 * curve_j[-1][0], 1e-9)
    by_round = {rm["round"]: rm for rm in round_means}
    report = {
        "rows": rows,
        "round_means": round_means,
        "j_at_2": by_round.get(2, {}).get("mean_j"),
        "j_at_8": by_round.get(8, {}).get("mean_j"),
        "auc_j": auc_over_time(curve_j, t_max),
        "auc_jf": auc_over_time(curve_jf, t_max),
        "t_max": t_max,
    }
    return report


def write_report_csv(path, all_rows):
    """One CSV row per (video, object, round): J/F averaged over frames."""
    grouped = {}
    for row in all_rows:
        key = (row["video"], row["object"], row["round"], row.get("backend", ""))
        grouped.setdefault(key, []).append(row)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video", "object", "round", "backend", "mean_j", "mean_f"])
        for key in sorted(grouped):
            rows = grouped[key]
            writer.writerow([key[0], key[1], key[2], key[3],
                             f"{np.mean([r['j'] for r in rows]):.6f}",
                             f"{np.mean([r['f'] for r in rows]):.6f}"])


def write_report_json(path, summary):
    """JSON summary; always embeds the published reference scores."""
    payload = dict(summary)
    payload["reference_scores"] = REFERENCE_SCORES
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
