"""Dense optical flow: a built-in coarse-to-fine variational estimator,
occlusion maps from splat counting, and the forward/backward round-trip check
used to gate seed propagation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .datasets import FlowArchive
from .errors import DegenerateInput


@dataclass
class FlowConfig:
    pyramid_levels: int = 3
    scale_step: float = 0.5
    iterations: int = 120  # Jacobi-style updates per level
    smoothness: float = 0.1  # regularizer weight, relative to [0,1] intensities


def _to_gray(frame):
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim == 3:
        return frame @ np.array([0.299, 0.587, 0.114])
    return frame


def _downscale(img):
    img = ndimage.gaussian_filter(img, sigma=1.0, mode="nearest")
    return img[::2, ::2]


def bilinear_sample(field, xs, ys):
    """Sample a (h, w) or (h, w, c) array at float positions with clamping."""
    h, w = field.shape[:2]
    xs = np.clip(xs, 0.0, w - 1.0)
    ys = np.clip(ys, 0.0, h - 1.0)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    fx = xs - x0
    fy = ys - y0
    if field.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    top = field[y0, x0] * (1 - fx) + field[y0, x1] * fx
    bot = field[y1, x0] * (1 - fx) + field[y1, x1] * fx
    return top * (1 - fy) + bot * fy


def _warp(img, u, v):
    h, w = img.shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.float64)
    return bilinear_sample(img, xs + u, ys + v)


_AVG_KERNEL = np.array([[1, 2, 1], [2, 0, 2], [1, 2, 1]], dtype=np.float64) / 12.0


def _hs_refine(a, b, u, v, cfg):
    """Horn-Schunck iterations around the current flow estimate (u, v)."""
    bw = _warp(b, u, v)
    ix = 0.5 * (np.gradient(a, axis=1) + np.gradient(bw, axis=1))
    iy = 0.5 * (np.gradient(a, axis=0) + np.gradient(bw, axis=0))
    it = bw - a
    alpha2 = cfg.smoothness**2
    denom = alpha2 + ix * ix + iy * iy
    du = np.zeros_like(u)
    dv = np.zeros_like(v)
    for _ in range(cfg.iterations):
        du_avg = ndimage.convolve(du, _AVG_KERNEL, mode="nearest")
        dv_avg = ndimage.convolve(dv, _AVG_KERNEL, mode="nearest")
        t = (ix * du_avg + iy * dv_avg + it) / denom
        du = du_avg - ix * t
        dv = dv_avg - iy * t
    return u + du, v + dv


def estimate_flow_builtin(frame_a, frame_b, cfg=None):
    """Estimate dense flow frame_a -> frame_b with a coarse-to-fine
    brightness-constancy + smoothness scheme. Deterministic for fixed cfg.

    Returns an (h, w, 2) float32 field, channels (u, v) in pixels.
    """
    cfg = cfg or FlowConfig()
    a = _to_gray(frame_a)
    b = _to_gray(frame_b)
    if a.size == 0 or b.size == 0:
        raise DegenerateInput("zero-area frame")
    if a.shape != b.shape:
        raise DegenerateInput(f"frame shapes differ: {a.shape} vs {b.shape}")

    # Normalize intensity scale so smoothness weight is image-independent.
    span = max(a.max() - a.min(), b.max() - b.min(), 1e-12)
    a = a / span
    b = b / span

    pyr_a, pyr_b = [a], [b]
    for _ in range(cfg.pyramid_levels - 1):
        if min(pyr_a[-1].shape) < 8:
            break
        pyr_a.append(_downscale(pyr_a[-1]))
        pyr_b.append(_downscale(pyr_b[-1]))

    u = np.zeros_like(pyr_a[-1])
    v = np.zeros_like(pyr_a[-1])
    for level in range(len(pyr_a) - 1, -1, -1):
        la, lb = pyr_a[level], pyr_b[level]
        if u.shape != la.shape:
            zy = la.shape[0] / u.shape[0]
            zx = la.shape[1] / u.shape[1]
            u = ndimage.zoom(u, (zy, zx), order=1) * zx
            v = ndimage.zoom(v, (zy, zx), order=1) * zy
        # Two warp/relinearization passes per level handle residual motion.
        for _ in range(2):
            u, v = _hs_refine(la, lb, u, v, cfg)
    return np.stack([u, v], axis=-1).astype(np.float32)


def estimate_archive_builtin(frames, cfg=None):
    """Forward and backward builtin flow for a whole frame sequence."""
    cfg = cfg or FlowConfig()
    fw = [estimate_flow_builtin(frames[t], frames[t + 1], cfg)
          for t in range(len(frames) - 1)]
    bw = [estimate_flow_builtin(frames[t + 1], frames[t], cfg)
          for t in range(len(frames) - 1)]
    return FlowArchive(forward=fw, backward=bw, source="builtin")


def occlusion_map(flow_into_frame):
    """Mark target pixels nobody maps to.

    `flow_into_frame` is the field defined on the adjacent frame's grid whose
    vectors point into the target frame. A target pixel is occluded iff zero
    source pixels land in its unit cell after nearest-integer rounding.
    """
    field = np.asarray(flow_into_frame, dtype=np.float64)
    h, w = field.shape[:2]
    ys, xs = np.mgrid[0:h, 0:w]
    tx = np.rint(xs + field[..., 0]).astype(np.int64).ravel()
    ty = np.rint(ys + field[..., 1]).astype(np.int64).ravel()
    ok = (tx >= 0) & (tx < w) & (ty >= 0) & (ty < h)
    counts = np.bincount(ty[ok] * w + tx[ok], minlength=h * w)
    return (counts == 0).reshape(h, w)


def occlusion_maps_for_video(flows: FlowArchive, num_frames, frame_shape):
    """Per-frame forward/backward occlusion maps, shape (T, h, w) each.

    Frame 0 has no incoming forward flow and frame T-1 no incoming backward
    flow; those maps are all-False (no occlusion evidence).
    """
    h, w = frame_shape
    occ_fw = np.zeros((num_frames, h, w), dtype=bool)
    occ_bw = np.zeros((num_frames, h, w), dtype=bool)
    for t in range(num_frames - 1):
        occ_fw[t + 1] = occlusion_map(flows.forward[t])
        occ_bw[t] = occlusion_map(flows.backward[t])
    return occ_fw, occ_bw


def sample_flow_at(field, point):
    """Bilinear flow vector at a float (x, y) position."""
    x, y = point
    return bilinear_sample(np.asarray(field, dtype=np.float64),
                           np.array([x]), np.array([y]))[0]


def _in_bounds(x, y, shape):
    h, w = shape[:2]
    return 0.0 <= x <= w - 1.0 and 0.0 <= y <= h - 1.0


def roundtrip_error(p, f, g):
    """||g(f(p)) - p||_2 in pixels; +inf when f(p) leaves the frame."""
    x, y = float(p[0]), float(p[1])
    if not _in_bounds(x, y, f.shape):
        return float("inf")
    ux, uy = sample_flow_at(f, (x, y))
    qx, qy = x + ux, y + uy
    if not _in_bounds(qx, qy, g.shape):
        return float("inf")
    vx, vy = sample_flow_at(g, (qx, qy))
    rx, ry = qx + vx, qy + vy
    return float(np.hypot(rx - x, ry - y))
