"""The service serves the built browser UI and supports its exact call
sequence. Skipped when frontend/dist has not been built (npm run build).
"""

from pathlib import Path

import pytest
from fastapi.testclient import TestClient

from sciscope.service import create_app
from tests.test_service import build_runtime, upload_png, wait_for_job

DIST = Path(__file__).parent.parent / "frontend" / "dist"

pytestmark = pytest.mark.skipif(
    not (DIST / "index.html").exists(), reason="frontend not built (cd frontend && npm run build)"
)


@pytest.fixture
def ui_service(tmp_path):
    runtime = build_runtime(tmp_path)
    runtime.start()
    client = TestClient(create_app(runtime, static_dir=DIST))
    yield client
    runtime.stop()


def test_static_shell_served(ui_service):
    index = ui_service.get("/")
    assert index.status_code == 200
    assert "<title>sciscope</title>" in index.text
    assert ui_service.get("/main.js").status_code == 200
    assert ui_service.get("/styles.css").status_code == 200


def test_ui_call_sequence_end_to_end(ui_service):
    # the exact request sequence frontend/src/main.ts performs
    health = ui_service.get("/healthz").json()
    assert health["lmm"] == "ok"

    accepted = ui_service.post(
        "/classify", files={"image": upload_png()}, data={"dataset_kind": "eelgrass"}
    )
    assert accepted.status_code == 202
    job = wait_for_job(ui_service, accepted.json()["job_id"])
    assert job["status"] == "done"
    result = job["result"]

    transcript = ui_service.get(f"/transcripts/{result['transcript_id']}").json()
    assert transcript["final"]["label"] == result["prediction"]["label"]

    session = ui_service.get(f"/transcripts/{result['transcript_id']}/chat").json()
    assert session == {"messages": []}

    reply = ui_service.post(
        f"/transcripts/{result['transcript_id']}/chat", json={"text": "explain the tools"}
    )
    assert reply.status_code == 200

    # a page reload re-fetches the session: history must be there
    session = ui_service.get(f"/transcripts/{result['transcript_id']}/chat").json()
    assert [m["role"] for m in session["messages"]] == ["user", "assistant"]

    for example_url in result["example_urls"].values():
        assert ui_service.get(example_url).status_code == 200
