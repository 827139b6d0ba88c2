"""Exercise the classification service end to end, in process: submit an
image, poll the job, fetch the transcript, and chat about it.

Run:  python demos/07_service_roundtrip.py
"""

import io
import time

from _common import build_demo_dataset, fresh_output, make_tile
from fastapi.testclient import TestClient
from PIL import Image

from sciscope.service import create_app
from sciscope.service_config import build_runtime_from_config

out = fresh_output("07_service")
manifest_path = build_demo_dataset(out / "data")

runtime = build_runtime_from_config(
    {
        "data_dir": str(out / "var"),
        "worker_count": 2,
        "embedding_provider": "pixelstats:16",
        "tile_provider": "fixture",
        "llm_backend": "policy",
        "datasets": {"eelgrass": {"manifest": str(manifest_path), "seed": 0}},
    }
)
runtime.start()
client = TestClient(create_app(runtime))

print("healthz:", client.get("/healthz").json())

buf = io.BytesIO()
Image.fromarray(make_tile(seed=9999, base=205, size=32)).save(buf, format="PNG")
resp = client.post(
    "/classify",
    files={"image": ("upload.png", buf.getvalue(), "image/png")},
    data={"dataset_kind": "eelgrass"},
)
job_id = resp.json()["job_id"]
print(f"submitted job {job_id} (HTTP {resp.status_code})")

job = None
for _ in range(200):
    job = client.get(f"/jobs/{job_id}").json()
    if job["status"] in ("done", "failed"):
        break
    time.sleep(0.05)
print(f"job finished: status={job['status']}")

result = job["result"]
print(f"prediction: {result['prediction']}")
print(f"retrieved examples: {result['example_urls']}")

transcript_id = result["transcript_id"]
transcript = client.get(f"/transcripts/{transcript_id}").json()
print(f"transcript {transcript_id}: {len(transcript['messages'])} messages, "
      f"{len(transcript['tool_calls'])} tool call(s)")

reply = client.post(
    f"/transcripts/{transcript_id}/chat", json={"text": "Why did you answer that way?"}
).json()["reply"]
print(f"follow-up reply: {reply}")

session = client.get(f"/transcripts/{transcript_id}/chat").json()
print(f"follow-up session now holds {len(session['messages'])} messages")

runtime.stop()
print("done")
