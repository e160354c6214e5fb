"""Drive the HTTP session service end to end: register a dataset, open a
session, submit a scribble, fetch the prediction overlay and the metric
curve. Uses the in-process test client so no port is opened.
"""

import os
import tempfile

from fastapi.testclient import TestClient

from graphvos import gnn, pipeline, service, synthetic

root = os.path.join(tempfile.gettempdir(), "graphvos_demo_service")
video = os.path.join(root, "clip")
os.makedirs(root, exist_ok=True)
synthetic.generate_synthetic(
    synthetic.default_synth_spec(num_frames=8, seed=2, noise=5.0), video)

cfg = pipeline.synthetic_engine_config(k_target=16, cap=30)
params = gnn.init_params(cfg.gnn, seed=0)  # untrained, for protocol demo
app = service.create_app(cfg, params=params, data_root=root,
                         preprocess_async=False)
client = TestClient(app)

print(client.get("/datasets/clip/status").json())

session = client.post("/sessions", json={"dataset_id": "clip"}).json()
sid = session["session_id"]
print("session:", session)

resp = client.post(f"/sessions/{sid}/scribbles", json={
    "frame": 0,
    "polylines": [{"points": [[12, 12], [20, 16], [26, 24]], "category": 1}],
}).json()
print("round result:", resp)

png = client.get(f"/sessions/{sid}/prediction",
                 params={"frame": 0, "version": resp["prediction_version"]})
print(f"prediction overlay: {len(png.content)} PNG bytes, "
      f"ETag {png.headers['etag']}")

cached = client.get(f"/sessions/{sid}/prediction",
                    params={"frame": 0, "version": 1},
                    headers={"If-None-Match": png.headers["etag"]})
print("conditional re-fetch status:", cached.status_code)

print("metrics:", client.get(f"/sessions/{sid}/metrics").json())
client.delete(f"/sessions/{sid}")
