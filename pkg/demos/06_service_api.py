"""The HTTP service, end to end, in process.

Walks the painter workflow against the JSON API: create a project from
line-art frames, read the segment inventory, bucket-fill the reference
frame, propagate, poll progress, fetch results and metrics. Uses the
FastAPI test client so no port is opened; `inkprop serve` exposes the
same app over HTTP for the browser UI.
"""

import base64
import tempfile
import time
from pathlib import Path

from fastapi.testclient import TestClient

from inkprop import pngio
from inkprop.matchnet import ModelConfig
from inkprop.raster import render_lines
from inkprop.service import create_app
from inkprop.synthesis import generate_clip, gt_colored, toy_translating_spec

state = tempfile.mkdtemp(prefix="inkprop-demo-")
client = TestClient(create_app(state, cfg=ModelConfig.desk()))
frame = generate_clip(toy_translating_spec(5))[0]


def b64(raster):
    return base64.b64encode(pngio.rgb_to_png_bytes(raster)).decode()


print("POST /projects (3-frame identity clip + ground truth)")
r = client.post(
    "/projects",
    json={
        "frames": [b64(render_lines(frame.lines))] * 3,
        "gt_frames": [b64(gt_colored(frame))] * 3,
    },
)
pid = r.json()["id"]
print(f"  -> {r.status_code} project {pid}")

segs = client.get(f"/projects/{pid}/frames/0/segments").json()
print(f"GET segments -> {len(segs['segments'])} segments")

print("PUT /frames/0/colors (bucket-fill every segment with its gt color)")
lab = frame.labeling
edits = {
    str(s["id"]): pngio.color_to_hex(lab.color_of_region[lab.region_of[s["id"]]])
    for s in segs["segments"]
}
r = client.put(f"/projects/{pid}/frames/0/colors", json={"edits": edits})
print(f"  -> applied {r.json()['applied']} edits")

print("POST /propagate (hu backend) and poll /status")
client.post(f"/projects/{pid}/propagate", json={"backend": "hu", "mode": "chain"})
while True:
    status = client.get(f"/projects/{pid}/status").json()
    print(f"  {status['state']} {status['progress']}/{status['total']}")
    if status["state"] in ("done", "error", "cancelled"):
        break
    time.sleep(0.05)

result = client.get(f"/projects/{pid}/frames/2/result").json()
n_unmatched = sum(s["unmatched"] for s in result["result"]["segments"])
print(f"GET frames/2/result -> {len(result['result']['segments'])} segments, "
      f"{n_unmatched} unmatched")

metrics = client.get(f"/projects/{pid}/metrics").json()
agg = metrics["aggregate"]
print("GET /metrics ->", {k: round(v, 4) for k, v in agg.items() if k != "size_bins"})
print(f"service state persisted under {state}")
