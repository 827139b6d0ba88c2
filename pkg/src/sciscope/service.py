"""HTTP backend of the deployed application.

Classification runs as asynchronous jobs: POST /classify enqueues, a
bounded worker pool runs the agent, and clients poll GET /jobs/{id}.
Finished transcripts are immutable; follow-up questions about a
transcript go through per-transcript chat sessions that never touch the
original record. Jobs, transcripts, and sessions live in a sqlite store
so a restart re-queues interrupted work and keeps finished results.
"""

from __future__ import annotations

import io
import json
import queue
import sqlite3
import threading
import time
import uuid
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, File, Form, UploadFile
from fastapi.responses import JSONResponse, Response
from fastapi.staticfiles import StaticFiles
from PIL import Image, UnidentifiedImageError

from .agent import AgentConfig, LmmClient, Message, Transcript, run_inference
from .data import DatasetManifest, GeoPoint, QueryImage
from .embeddings import EmbeddingProvider, EmbeddingStore
from .errors import SciscopeError
from .geo import TileProvider
from .probe import MlpParams
from .tools import ToolRegistry

JOB_STATUSES = ("queued", "running", "done", "failed")


class KeyValueStore:
    """Tiny transactional JSON-document store over sqlite."""

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._conn = sqlite3.connect(str(self.path), check_same_thread=False)
        with self._lock:
            self._conn.execute(
                "CREATE TABLE IF NOT EXISTS kv ("
                "  bucket TEXT NOT NULL, key TEXT NOT NULL, value TEXT NOT NULL,"
                "  PRIMARY KEY (bucket, key))"
            )
            self._conn.commit()

    def put(self, bucket: str, key: str, value) -> None:
        text = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
        with self._lock:
            self._conn.execute(
                "INSERT INTO kv (bucket, key, value) VALUES (?, ?, ?) "
                "ON CONFLICT (bucket, key) DO UPDATE SET value = excluded.value",
                (bucket, key, text),
            )
            self._conn.commit()

    def get_text(self, bucket: str, key: str) -> str | None:
        with self._lock:
            row = self._conn.execute(
                "SELECT value FROM kv WHERE bucket = ? AND key = ?", (bucket, key)
            ).fetchone()
        return row[0] if row else None

    def get(self, bucket: str, key: str):
        text = self.get_text(bucket, key)
        return None if text is None else json.loads(text)

    def keys(self, bucket: str) -> list[str]:
        with self._lock:
            rows = self._conn.execute(
                "SELECT key FROM kv WHERE bucket = ? ORDER BY key", (bucket,)
            ).fetchall()
        return [r[0] for r in rows]

    def close(self) -> None:
        with self._lock:
            self._conn.close()


@dataclass
class DatasetRuntime:
    """Everything needed to classify one dataset kind."""

    kind: str
    manifest: DatasetManifest
    store: EmbeddingStore
    registry: ToolRegistry
    probe: MlpParams | None = None


@dataclass
class ServiceRuntime:
    """Shared service state: backends, datasets, persistence, workers."""

    data_dir: Path
    datasets: dict[str, DatasetRuntime]
    embedder: EmbeddingProvider
    make_llm: object  # zero-arg callable returning an LmmClient
    tile_provider: TileProvider | None = None
    worker_count: int = 2
    agent_config: AgentConfig = field(default_factory=AgentConfig)
    domain_prompts: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        self.data_dir = Path(self.data_dir)
        self.uploads_dir = self.data_dir / "uploads"
        self.uploads_dir.mkdir(parents=True, exist_ok=True)
        self.db = KeyValueStore(self.data_dir / "service.db")
        self._queue: queue.Queue[str] = queue.Queue()
        self._session_locks: dict[str, threading.Lock] = defaultdict(threading.Lock)
        self._workers: list[threading.Thread] = []
        self._stopping = threading.Event()
        self._recover()

    # -- job lifecycle --

    def _recover(self) -> None:
        """Re-queue jobs that were running when the previous process died."""
        for job_id in self.db.keys("jobs"):
            job = self.db.get("jobs", job_id)
            if job["status"] == "running":
                job["status"] = "queued"
                self.db.put("jobs", job_id, job)
            if self.db.get("jobs", job_id)["status"] == "queued":
                self._queue.put(job_id)

    def start(self) -> None:
        if self._workers:
            return
        self._stopping.clear()
        for i in range(self.worker_count):
            worker = threading.Thread(target=self._worker_loop, name=f"job-worker-{i}", daemon=True)
            worker.start()
            self._workers.append(worker)

    def stop(self) -> None:
        self._stopping.set()
        for _ in self._workers:
            self._queue.put("")  # wake blocked workers
        for worker in self._workers:
            worker.join(timeout=5)
        self._workers.clear()

    def submit(self, image_bytes: bytes, dataset_kind: str, geo: GeoPoint | None) -> str:
        job_id = uuid.uuid4().hex
        (self.uploads_dir / f"{job_id}.bin").write_bytes(image_bytes)
        job = {
            "job_id": job_id,
            "status": "queued",
            "dataset_kind": dataset_kind,
            "geo": None if geo is None else {"lat": geo.lat, "lon": geo.lon, "zoom": geo.zoom},
            "submitted_at": _now(),
            "finished_at": None,
            "result": None,
            "error": None,
        }
        self.db.put("jobs", job_id, job)
        self._queue.put(job_id)
        return job_id

    def _worker_loop(self) -> None:
        while not self._stopping.is_set():
            try:
                job_id = self._queue.get(timeout=0.2)
            except queue.Empty:
                continue
            if not job_id:
                continue
            try:
                self._execute(job_id)
            except Exception:  # _execute records failures; never kill the worker
                pass

    def _execute(self, job_id: str) -> None:
        job = self.db.get("jobs", job_id)
        if job is None or job["status"] != "queued":
            return
        job["status"] = "running"
        self.db.put("jobs", job_id, job)
        try:
            runtime = self.datasets[job["dataset_kind"]]
            pixels = decode_upload((self.uploads_dir / f"{job_id}.bin").read_bytes())
            geo = None
            if job["geo"]:
                geo = GeoPoint(lat=job["geo"]["lat"], lon=job["geo"]["lon"], zoom=job["geo"]["zoom"])
            image = QueryImage(id=job_id, pixels=pixels, geo=geo)
            config = AgentConfig(
                max_turns=self.agent_config.max_turns,
                min_tools_encouraged=self.agent_config.min_tools_encouraged,
                temperature=self.agent_config.temperature,
                seed=self.agent_config.seed,
                domain_prompt=self.domain_prompts.get(job["dataset_kind"], ""),
            )
            prediction, transcript = run_inference(
                image,
                self.make_llm(),
                config,
                store=runtime.store,
                registry=runtime.registry,
                embedder=self.embedder,
                example_loader=lambda image_id: runtime.manifest.load_image_by_id(image_id).pixels,
                dataset_kind=job["dataset_kind"],
            )
            self.db.put("transcripts", transcript.conversation_id, transcript.to_json_text())
            job["status"] = "done"
            job["result"] = {
                "prediction": prediction.to_json(),
                "transcript_id": transcript.conversation_id,
                "visrag_pos_id": transcript.visrag_pos_id,
                "visrag_neg_id": transcript.visrag_neg_id,
            }
        except Exception as exc:
            job["status"] = "failed"
            job["error"] = f"{type(exc).__name__}: {exc}"
        job["finished_at"] = _now()
        self.db.put("jobs", job_id, job)

    # -- follow-up chat --

    def chat(self, transcript_id: str, text: str) -> str:
        raw = self.db.get_text("transcripts", transcript_id)
        if raw is None:
            raise KeyError(transcript_id)
        with self._session_locks[transcript_id]:
            transcript = Transcript.from_json(json.loads(raw))
            session = self.db.get("sessions", transcript_id) or {"messages": []}
            conversation = list(transcript.messages)
            for m in session["messages"]:
                conversation.append(Message(role=m["role"], text=m["text"]))
            conversation.append(Message(role="user", text=text))
            reply = self.make_llm().chat(conversation)
            session["messages"].append({"role": "user", "text": text})
            session["messages"].append({"role": "assistant", "text": reply})
            self.db.put("sessions", transcript_id, session)
            return reply

    def example_image_path(self, image_id: str) -> Path | None:
        for runtime in self.datasets.values():
            try:
                entry = runtime.manifest.entry_by_id(image_id)
            except KeyError:
                continue
            index = runtime.manifest.entries.index(entry)
            return runtime.manifest.image_path(index)
        return None

    def health(self) -> dict[str, str]:
        def status(ok: bool) -> str:
            return "ok" if ok else "unavailable"

        report = {
            "embedding": status(_safe_health(self.embedder)),
            "lmm": status(_safe_health(self.make_llm())),
        }
        if self.tile_provider is not None:
            report["tiles"] = status(_safe_health(self.tile_provider))
        return report


def _safe_health(component) -> bool:
    try:
        return bool(component.check_health())
    except Exception:
        return False


def _now() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime())


def decode_upload(data: bytes) -> np.ndarray:
    """Decode uploaded bytes to a raster; ValueError when undecodable."""
    if not data:
        raise ValueError("empty upload")
    try:
        with Image.open(io.BytesIO(data)) as im:
            if im.mode == "L":
                return np.asarray(im, dtype=np.uint8)[:, :, None]
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except UnidentifiedImageError as exc:
        raise ValueError("upload is not a decodable image") from exc


def create_app(runtime: ServiceRuntime, static_dir: Path | str | None = None) -> FastAPI:
    """Wire the REST endpoints around a runtime."""
    app = FastAPI(title="sciscope service")

    @app.post("/classify", status_code=202)
    async def classify(
        image: UploadFile = File(...),
        dataset_kind: str = Form(...),
        lat: float | None = Form(None),
        lon: float | None = Form(None),
        zoom: int | None = Form(None),
    ):
        if dataset_kind not in runtime.datasets:
            return _error(400, f"unknown dataset_kind {dataset_kind!r}")
        data = await image.read()
        try:
            decode_upload(data)
        except ValueError as exc:
            return _error(400, f"image: {exc}")
        geo = None
        if dataset_kind == "aquaculture":
            missing = [name for name, value in (("lat", lat), ("lon", lon)) if value is None]
            if missing:
                return _error(400, f"{', '.join(missing)}: required for aquaculture uploads")
        if lat is not None and lon is not None:
            try:
                geo = GeoPoint(lat=lat, lon=lon, zoom=zoom if zoom is not None else 16)
            except ValueError as exc:
                return _error(400, str(exc))
        if not _safe_health(runtime.make_llm()):
            return _error(503, "LMM backend unavailable")
        job_id = runtime.submit(data, dataset_kind, geo)
        return {"job_id": job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = runtime.db.get("jobs", job_id)
        if job is None:
            return _error(404, f"unknown job {job_id!r}")
        payload = dict(job)
        if job["status"] == "done" and job["result"]:
            result = dict(job["result"])
            result["example_urls"] = {
                "positive": f"/examples/{result['visrag_pos_id']}",
                "negative": f"/examples/{result['visrag_neg_id']}",
            }
            payload["result"] = result
        return payload

    @app.get("/transcripts/{transcript_id}")
    def get_transcript(transcript_id: str):
        raw = runtime.db.get_text("transcripts", transcript_id)
        if raw is None:
            return _error(404, f"unknown transcript {transcript_id!r}")
        return Response(content=raw, media_type="application/json")

    @app.get("/transcripts/{transcript_id}/chat")
    def get_chat(transcript_id: str):
        if runtime.db.get_text("transcripts", transcript_id) is None:
            return _error(404, f"unknown transcript {transcript_id!r}")
        session = runtime.db.get("sessions", transcript_id) or {"messages": []}
        return session

    @app.post("/transcripts/{transcript_id}/chat")
    def post_chat(transcript_id: str, body: dict):
        text = (body or {}).get("text", "").strip()
        if not text:
            return _error(400, "text: must be a non-empty string")
        try:
            reply = runtime.chat(transcript_id, text)
        except KeyError:
            return _error(404, f"unknown transcript {transcript_id!r}")
        except SciscopeError as exc:
            return _error(503, str(exc))
        return {"reply": reply}

    @app.get("/examples/{image_id}")
    def get_example(image_id: str):
        path = runtime.example_image_path(image_id)
        if path is None or not path.exists():
            return _error(404, f"unknown example image {image_id!r}")
        suffix = path.suffix.lower()
        media = "image/jpeg" if suffix in (".jpg", ".jpeg") else "image/png"
        return Response(content=path.read_bytes(), media_type=media)

    @app.get("/healthz")
    def healthz():
        return runtime.health()

    if static_dir is not None and Path(static_dir).exists():
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def _error(status: int, message: str) -> JSONResponse:
    return JSONResponse(status_code=status, content={"error": message})
