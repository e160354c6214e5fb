"""HTTP session service: dataset registration with background preprocessing,
interactive sessions over the annotation protocol, versioned prediction
overlays as indexed PNGs, and metric curves.

One round executes per session at a time; concurrent submissions get 409.
"""

from __future__ import annotations

import io
import os
import threading
import uuid

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from PIL import Image

from . import gnn as gnn_mod
from . import interact, metrics, pipeline
from .datasets import LABEL_PALETTE


class _Dataset:
    def __init__(self, root, dataset_id):
        self.root = root
        self.id = dataset_id
        self.state = "pending"  # pending | running | ready | failed
        self.error = None
        self.pre = None


class _Session:
    def __init__(self, session_id, dataset, backend, params, rng_seed):
        self.id = session_id
        self.dataset = dataset
        self.backend = backend
        self.lock = threading.Lock()
        pre = dataset.pre
        num_objects = pre.dataset.num_objects or 1
        self.state = interact.SessionState(
            pre, num_objects, params=params, cfg=pre.config.session,
            rng_seed=rng_seed, backend=backend)
        self.predictions = {}  # version -> list of (h, w) uint8 label maps
        self.version = 0

    @property
    def num_objects(self):
        return self.state.num_objects


def _png_bytes(label_map):
    im = Image.fromarray(label_map.astype(np.uint8), mode="P")
    flat = [c for rgb in LABEL_PALETTE for c in rgb]
    im.putpalette(flat + [0] * (768 - len(flat)))
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def create_app(cfg=None, params=None, data_root=None, preprocess_async=True):
    """Build the FastAPI app. `data_root` (optional) is scanned for dataset
    subdirectories which are registered eagerly."""
    cfg = cfg or pipeline.EngineConfig()
    app = FastAPI(title="graphvos session service")
    datasets_reg = {}
    sessions = {}
    registry_lock = threading.Lock()
    app.state.datasets = datasets_reg
    app.state.sessions = sessions

    def _preprocess(ds):
        ds.state = "running"
        try:
            ds.pre, _ = pipeline.preprocess_video(ds.root, cfg)
            ds.state = "ready"
        except Exception as exc:  # surface the error through /status
            ds.state = "failed"
            ds.error = str(exc)

    def _register(root, dataset_id=None):
        dataset_id = dataset_id or os.path.basename(os.path.normpath(root))
        with registry_lock:
            if dataset_id in datasets_reg:
                return datasets_reg[dataset_id]
            ds = _Dataset(root, dataset_id)
            datasets_reg[dataset_id] = ds
        if preprocess_async:
            threading.Thread(target=_preprocess, args=(ds,), daemon=True).start()
        else:
            _preprocess(ds)
        return ds

    if data_root:
        for name in sorted(os.listdir(data_root)):
            sub = os.path.join(data_root, name)
            if os.path.isdir(os.path.join(sub, "frames")):
                _register(sub, name)

    @app.post("/datasets", status_code=201)
    async def register_dataset(payload: dict):
        root = payload.get("root")
        if not root or not os.path.isdir(root):
            return JSONResponse({"error": "root directory not found"},
                                status_code=404)
        ds = _register(root, payload.get("id"))
        return {"dataset_id": ds.id, "state": ds.state}

    @app.get("/datasets/{dataset_id}/status")
    async def dataset_status(dataset_id: str):
        ds = datasets_reg.get(dataset_id)
        if ds is None:
            return JSONResponse({"error": "unknown dataset"}, status_code=404)
        body = {"dataset_id": ds.id, "state": ds.state}
        if ds.error:
            body["error"] = ds.error
        if ds.pre is not None:
            body["frame_count"] = ds.pre.dataset.num_frames
        return body

    @app.post("/sessions", status_code=201)
    async def create_session(payload: dict):
        dataset_id = payload.get("dataset_id")
        backend = payload.get("backend", "gnn")
        ds = datasets_reg.get(dataset_id)
        if ds is None:
            return JSONResponse({"error": "unknown dataset"}, status_code=404)
        if ds.state != "ready":
            return JSONResponse({"error": f"dataset is {ds.state}"},
                                status_code=409)
        if backend not in ("gnn", "mrf"):
            return JSONResponse({"error": "backend must be gnn or mrf"},
                                status_code=422)
        if backend == "gnn" and params is None:
            return JSONResponse({"error": "no model checkpoint loaded"},
                                status_code=409)
        session_id = uuid.uuid4().hex[:12]
        sess = _Session(session_id, ds, backend, params,
                        rng_seed=payload.get("rng_seed", 0))
        sessions[session_id] = sess
        return {
            "session_id": session_id,
            "frame_count": ds.pre.dataset.num_frames,
            "categories": list(range(1, sess.num_objects + 1)),
        }

    @app.post("/sessions/{session_id}/scribbles")
    async def submit_scribbles(session_id: str, payload: dict):
        sess = sessions.get(session_id)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        frame = payload.get("frame")
        polylines = payload.get("polylines", [])
        pre = sess.state.pre
        h, w = pre.dataset.frame_shape
        if frame is None or not (0 <= frame < pre.dataset.num_frames):
            return JSONResponse({"error": "frame out of range"}, status_code=422)
        if not polylines:
            return JSONResponse({"error": "no polylines"}, status_code=422)
        scribbles = []
        for pl in polylines:
            pts = pl.get("points", [])
            cat = pl.get("category")
            if cat is None or not (0 <= cat <= sess.num_objects):
                return JSONResponse({"error": "bad category"}, status_code=422)
            if len(pts) < 2:
                return JSONResponse({"error": "polyline needs >= 2 points"},
                                    status_code=422)
            for (x, y) in pts:
                if not (0 <= x <= w - 1 and 0 <= y <= h - 1):
                    return JSONResponse(
                        {"error": f"point ({x}, {y}) out of bounds"},
                        status_code=422)
            scribbles.append(interact.Scribble(
                frame=frame, points=[tuple(p) for p in pts], category=cat))
        if not sess.lock.acquire(blocking=False):
            return JSONResponse({"error": "a round is already executing"},
                                status_code=409)
        try:
            result = interact.run_round(
                sess.state, scribbles,
                rebuild_fn=sess.state.pre.rebuild_with_segs,
                gt_masks=pre.dataset.gt_masks)
            sess.version += 1
            sess.predictions[sess.version] = [m.astype(np.uint8)
                                              for m in result.prediction_maps]
        finally:
            sess.lock.release()
        return {"round": result.round_index,
                "prediction_version": sess.version,
                "inference_ms": result.inference_ms}

    @app.get("/sessions/{session_id}/prediction")
    async def get_prediction(session_id: str, request: Request,
                             frame: int = Query(...),
                             version: int | None = Query(None)):
        sess = sessions.get(session_id)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        version = sess.version if version is None else version
        maps = sess.predictions.get(version)
        if maps is None or not (0 <= frame < len(maps)):
            return JSONResponse({"error": "unknown version or frame"},
                                status_code=404)
        etag = f'"{version}"'
        if request.headers.get("if-none-match") == etag:
            return Response(status_code=304)
        return Response(content=_png_bytes(maps[frame]), media_type="image/png",
                        headers={"ETag": etag})

    @app.get("/sessions/{session_id}/frames/{frame}")
    async def get_frame(session_id: str, frame: int):
        sess = sessions.get(session_id)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        ds = sess.state.pre.dataset
        if not (0 <= frame < ds.num_frames):
            return JSONResponse({"error": "frame out of range"}, status_code=404)
        buf = io.BytesIO()
        Image.fromarray(ds.frames[frame], mode="RGB").save(buf, format="PNG")
        return Response(content=buf.getvalue(), media_type="image/png")

    @app.get("/sessions/{session_id}/metrics")
    async def get_metrics(session_id: str):
        sess = sessions.get(session_id)
        if sess is None:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        records = [r for r in sess.state.records if "frame_j" in r]
        if not records:
            return Response(status_code=204)
        report = metrics.evaluate_session(records)
        return {"rounds": report["round_means"]}

    @app.delete("/sessions/{session_id}", status_code=204)
    async def delete_session(session_id: str):
        if session_id not in sessions:
            return JSONResponse({"error": "unknown session"}, status_code=404)
        del sessions[session_id]
        return Response(status_code=204)

    return app
