"""Dataset loading and on-disk formats: frame/mask PNGs, .flo flow files,
.vsfm feature-map containers and JSONL session logs.

Directory layout of a video dataset::

    <root>/
      frames/frame_%05d.png     8-bit RGB
      masks/mask_%05d.png       optional, indexed PNG, palette index = label
      flow_fw/flow_%05d.flo     optional, forward flow t -> t+1
      flow_bw/flow_%05d.flo     optional, backward flow t+1 -> t
      feats.vsfm                optional, precomputed dense feature maps
"""

from __future__ import annotations

import json
import os
import re
import struct
from dataclasses import dataclass, field

import numpy as np
from PIL import Image

from .errors import (
    BadMagic,
    CorruptImage,
    DimensionMismatch,
    IoFailure,
    MissingFrames,
    SizeMismatch,
    TruncatedFile,
)

FLO_MAGIC = b"PIEH"
VSFM_MAGIC = b"VSFM"

# Fixed palette used for mask PNGs and prediction overlays (index = label id).
# Index 0 is background; the remaining entries are distinct saturated colors.
LABEL_PALETTE = [
    (0, 0, 0),
    (230, 25, 75),
    (60, 180, 75),
    (255, 225, 25),
    (0, 130, 200),
    (245, 130, 48),
    (145, 30, 180),
    (70, 240, 240),
    (240, 50, 230),
    (210, 245, 60),
    (250, 190, 190),
]


@dataclass
class VideoDataset:
    """An ordered frame sequence with optional ground-truth label maps."""

    id: str
    frames: list  # list of (h, w, 3) uint8 arrays
    gt_masks: list | None = None  # list of (h, w) int arrays, 0 = background
    fps_hint: float | None = None

    @property
    def num_frames(self):
        return len(self.frames)

    @property
    def frame_shape(self):
        return self.frames[0].shape[:2]

    @property
    def num_objects(self):
        """Largest object id in the ground truth (0 when no masks)."""
        if not self.gt_masks:
            return 0
        return int(max(int(m.max()) for m in self.gt_masks))


@dataclass
class FlowArchive:
    """Dense forward/backward flow fields for a T-frame video (T-1 each)."""

    forward: list  # forward[t]: (h, w, 2) float32, frame t -> t+1
    backward: list  # backward[t]: (h, w, 2) float32, frame t+1 -> t
    source: str = "ingested"  # or "builtin"

    def validate(self, num_frames, frame_shape):
        if len(self.forward) != num_frames - 1 or len(self.backward) != num_frames - 1:
            raise SizeMismatch(
                f"expected {num_frames - 1} flow fields per direction, got "
                f"{len(self.forward)} forward / {len(self.backward)} backward"
            )
        for f in list(self.forward) + list(self.backward):
            if f.shape[:2] != tuple(frame_shape):
                raise DimensionMismatch("flow field dimensions do not match frames")


@dataclass
class FeatureMapArchive:
    """Per-frame dense feature tensors (T, C, h', w') plus pixel-grid scale."""

    maps: np.ndarray  # (T, C, h', w') float32
    scale: float = 1.0  # pixel grid extent / feature grid extent

    @property
    def channels(self):
        return self.maps.shape[1]


def _indexed_files(directory, pattern):
    """Map frame index -> path for files matching `pattern` (one %d group)."""
    rx = re.compile(pattern)
    out = {}
    for name in sorted(os.listdir(directory)):
        m = rx.fullmatch(name)
        if m:
            out[int(m.group(1))] = os.path.join(directory, name)
    return out


def _check_contiguous(indices, what):
    if not indices:
        raise MissingFrames(f"no {what} found")
    lo, hi = min(indices), max(indices)
    missing = sorted(set(range(lo, hi + 1)) - set(indices))
    if missing:
        raise MissingFrames(f"gap in {what} numbering: missing indices {missing[:8]}")


def _read_rgb(path):
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, SyntaxError) as exc:
        raise CorruptImage(f"cannot decode {path}: {exc}") from exc


def _read_mask(path):
    try:
        with Image.open(path) as im:
            if im.mode not in ("P", "L", "I"):
                im = im.convert("P")
            return np.asarray(im, dtype=np.int32)
    except (OSError, SyntaxError) as exc:
        raise CorruptImage(f"cannot decode {path}: {exc}") from exc


def load_dataset(root_path):
    """Load a dataset directory into memory.

    Frames are sorted by index; masks (if present) are aligned to frames.
    Raises MissingFrames on numbering gaps, DimensionMismatch when a mask
    does not match its frame, CorruptImage on undecodable files.
    """
    frames_dir = os.path.join(root_path, "frames")
    if not os.path.isdir(frames_dir):
        raise MissingFrames(f"no frames/ directory under {root_path}")
    frame_files = _indexed_files(frames_dir, r"frame_(\d+)\.png")
    _check_contiguous(list(frame_files), "frame")
    frames = [_read_rgb(frame_files[i]) for i in sorted(frame_files)]
    shape = frames[0].shape
    for i, f in enumerate(frames):
        if f.shape != shape:
            raise DimensionMismatch(f"frame {i} has shape {f.shape}, expected {shape}")

    gt_masks = None
    masks_dir = os.path.join(root_path, "masks")
    if os.path.isdir(masks_dir):
        mask_files = _indexed_files(masks_dir, r"mask_(\d+)\.png")
        if mask_files:
            _check_contiguous(list(mask_files), "mask")
            if len(mask_files) != len(frames):
                raise MissingFrames(
                    f"{len(mask_files)} masks for {len(frames)} frames"
                )
            gt_masks = [_read_mask(mask_files[i]) for i in sorted(mask_files)]
            for i, m in enumerate(gt_masks):
                if m.shape != shape[:2]:
                    raise DimensionMismatch(
                        f"mask {i} has shape {m.shape}, expected {shape[:2]}"
                    )

    return VideoDataset(id=os.path.basename(os.path.normpath(root_path)),
                        frames=frames, gt_masks=gt_masks)


def load_flow_archive(root_path, num_frames, frame_shape):
    """Load flow_fw/ and flow_bw/ if both are present, else return None."""
    fw_dir = os.path.join(root_path, "flow_fw")
    bw_dir = os.path.join(root_path, "flow_bw")
    if not (os.path.isdir(fw_dir) and os.path.isdir(bw_dir)):
        return None
    fw_files = _indexed_files(fw_dir, r"flow_(\d+)\.flo")
    bw_files = _indexed_files(bw_dir, r"flow_(\d+)\.flo")
    if not fw_files and not bw_files:
        return None
    _check_contiguous(list(fw_files), "forward flow")
    _check_contiguous(list(bw_files), "backward flow")
    archive = FlowArchive(
        forward=[read_flo(fw_files[i]) for i in sorted(fw_files)],
        backward=[read_flo(bw_files[i]) for i in sorted(bw_files)],
        source="ingested",
    )
    archive.validate(num_frames, frame_shape)
    return archive


def write_frames(root_path, frames):
    os.makedirs(os.path.join(root_path, "frames"), exist_ok=True)
    for i, f in enumerate(frames):
        Image.fromarray(f, mode="RGB").save(
            os.path.join(root_path, "frames", f"frame_{i:05d}.png")
        )


def write_masks(root_path, masks):
    os.makedirs(os.path.join(root_path, "masks"), exist_ok=True)
    flat = [c for rgb in LABEL_PALETTE for c in rgb]
    flat += [0] * (768 - len(flat))
    for i, m in enumerate(masks):
        im = Image.fromarray(m.astype(np.uint8), mode="P")
        im.putpalette(flat)
        im.save(os.path.join(root_path, "masks", f"mask_{i:05d}.png"))


def write_flow_archive(root_path, archive):
    for sub, fields in (("flow_fw", archive.forward), ("flow_bw", archive.backward)):
        os.makedirs(os.path.join(root_path, sub), exist_ok=True)
        for i, f in enumerate(fields):
            write_flo(os.path.join(root_path, sub, f"flow_{i:05d}.flo"), f)


# --- .flo (Middlebury-style container) ---------------------------------------

def read_flo(path):
    """Read a .flo file into an (h, w, 2) float32 field."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != FLO_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        header = fh.read(8)
        if len(header) != 8:
            raise TruncatedFile(f"{path}: truncated header")
        w, h = struct.unpack("<ii", header)
        if w <= 0 or h <= 0:
            raise TruncatedFile(f"{path}: nonsensical dimensions {w}x{h}")
        payload = fh.read(8 * w * h)
        if len(payload) != 8 * w * h:
            raise TruncatedFile(f"{path}: expected {8 * w * h} payload bytes")
    data = np.frombuffer(payload, dtype="<f4").reshape(h, w, 2)
    return np.ascontiguousarray(data)


def write_flo(path, field):
    """Write an (h, w, 2) field as .flo; exact inverse of read_flo."""
    field = np.asarray(field, dtype="<f4")
    if field.ndim != 3 or field.shape[2] != 2:
        raise SizeMismatch(f"flow field must be (h, w, 2), got {field.shape}")
    h, w = field.shape[:2]
    with open(path, "wb") as fh:
        fh.write(FLO_MAGIC)
        fh.write(struct.pack("<ii", w, h))
        fh.write(field.tobytes())


# --- .vsfm feature-map container ----------------------------------------------

def read_feature_maps(path):
    """Read a .vsfm container into a FeatureMapArchive.

    Layout: magic "VSFM", version u32, T u32, C u32, h' u32, w' u32, then
    T*C*h'*w' float32 little-endian values.
    """
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != VSFM_MAGIC:
            raise BadMagic(f"{path}: bad magic {magic!r}")
        header = fh.read(20)
        if len(header) != 20:
            raise TruncatedFile(f"{path}: truncated header")
        version, t, c, fh_, fw_ = struct.unpack("<IIIII", header)
        if version != 1:
            raise BadMagic(f"{path}: unsupported version {version}")
        expected = 4 * t * c * fh_ * fw_
        payload = fh.read(expected + 1)
        if len(payload) != expected:
            raise SizeMismatch(
                f"{path}: payload holds {len(payload)} bytes, header implies {expected}"
            )
    maps = np.frombuffer(payload, dtype="<f4").reshape(t, c, fh_, fw_)
    return FeatureMapArchive(maps=np.ascontiguousarray(maps))


def write_feature_maps(path, archive):
    maps = np.asarray(archive.maps, dtype="<f4")
    if maps.ndim != 4:
        raise SizeMismatch(f"feature maps must be (T, C, h', w'), got {maps.shape}")
    with open(path, "wb") as fh:
        fh.write(VSFM_MAGIC)
        fh.write(struct.pack("<IIIII", 1, *maps.shape))
        fh.write(maps.tobytes())


# --- JSONL session logs ---------------------------------------------------------

def append_session_log(path, round_record):
    """Append one round record as a single JSON line."""
    try:
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(round_record, sort_keys=True) + "\n")
    except OSError as exc:
        raise IoFailure(f"cannot append to {path}: {exc}") from exc


def read_session_log(path):
    """Replay a JSONL session log into an ordered list of round records."""
    records = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if line:
                    records.append(json.loads(line))
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    return records
