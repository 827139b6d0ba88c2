"""Embedding providers, the labeled embedding store, and retrieval.

Training images are embedded once into a shared vector space and split
into a positive and a negative partition. Retrieval returns the most
cosine-similar member of each partition for a query embedding; the same
store backs the k-nearest-neighbor baseline. A zero-shot classifier
compares the image embedding against text embeddings of the two labels.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import httpx
import numpy as np

from .data import POSITIVE, DatasetManifest, Prediction, check_raster
from .errors import (
    DimensionMismatch,
    EmptyPartition,
    EmptyStore,
    PartialFailure,
    ProviderUnavailable,
    ZeroVector,
)
from .imaging import to_png_bytes


def as_vector(values) -> np.ndarray:
    """Coerce to a finite, non-zero 1-D float64 vector."""
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1 or vec.size == 0:
        raise DimensionMismatch(f"expected a 1-D vector, got shape {vec.shape}")
    if not np.all(np.isfinite(vec)):
        raise ValueError("vector has non-finite components")
    if not np.any(vec):
        raise ZeroVector("zero vector: cosine similarity is undefined")
    return vec


def cosine(a, b) -> float:
    """Cosine similarity (a . b) / (|a| |b|) for non-zero same-dimension vectors."""
    va, vb = as_vector(a), as_vector(b)
    if va.shape != vb.shape:
        raise DimensionMismatch(f"dimension mismatch: {va.shape[0]} vs {vb.shape[0]}")
    denom = math.sqrt(float(np.dot(va, va)) * float(np.dot(vb, vb)))
    return float(np.dot(va, vb)) / denom


def pixel_sha256(pixels: np.ndarray) -> str:
    """Content hash of a raster: shape header plus the raw pixel buffer."""
    check_raster(pixels)
    h = hashlib.sha256()
    h.update(f"{pixels.shape[0]}x{pixels.shape[1]}x{pixels.shape[2]}:".encode())
    h.update(np.ascontiguousarray(pixels).tobytes())
    return h.hexdigest()


class EmbeddingProvider:
    """Maps images (and label texts) into a shared d-dimensional space."""

    provider_id: str = "abstract"

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def embed_text(self, text: str) -> np.ndarray:
        raise NotImplementedError

    def check_health(self) -> bool:
        return True


class FixtureEmbeddingProvider(EmbeddingProvider):
    """Offline provider: content hash seeds a deterministic unit vector.

    Embeddings carry no semantic signal; use it wherever tests only need
    determinism and a valid vector space.
    """

    def __init__(self, dim: int = 64, salt: str = ""):
        if dim < 1:
            raise ValueError("dim must be >= 1")
        self.dim = dim
        self.salt = salt
        self.provider_id = f"fixture-{dim}" + (f"-{salt}" if salt else "")
        self.calls = 0

    def _vector_from(self, payload: bytes) -> np.ndarray:
        self.calls += 1
        digest = hashlib.sha256(self.salt.encode() + payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        return self._vector_from(pixel_sha256(pixels).encode())

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector_from(b"text:" + text.encode())


class PixelStatsEmbeddingProvider(EmbeddingProvider):
    """Offline provider whose vectors reflect simple pixel statistics.

    Unlike the hash fixture, images with similar content get similar
    embeddings, so retrieval, k-NN, and the probe behave meaningfully in
    offline simulations and demos.
    """

    def __init__(self, dim: int = 16):
        if dim < 4:
            raise ValueError("dim must be >= 4")
        self.dim = dim
        self.provider_id = f"pixelstats-{dim}"
        self.calls = 0

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        self.calls += 1
        check_raster(pixels)
        work = pixels.astype(np.float64) / 255.0
        feats = [work.mean(), work.std(), work.max(), work.min()]
        # coarse 2x2 spatial means fill the remaining components
        h, w = work.shape[:2]
        halves = [
            work[: h // 2 or 1, : w // 2 or 1].mean(),
            work[: h // 2 or 1, w // 2 :].mean() if w > 1 else feats[0],
            work[h // 2 :, : w // 2 or 1].mean() if h > 1 else feats[0],
            work[h // 2 :, w // 2 :].mean() if h > 1 and w > 1 else feats[0],
        ]
        feats.extend(halves)
        vec = np.zeros(self.dim)
        vec[: min(len(feats), self.dim)] = feats[: self.dim]
        vec[-1] += 1e-3  # never the zero vector, even for all-black input
        return vec

    def embed_text(self, text: str) -> np.ndarray:
        self.calls += 1
        digest = hashlib.sha256(b"text:" + text.encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        vec = rng.standard_normal(self.dim)
        return vec / np.linalg.norm(vec)


class HttpEmbeddingProvider(EmbeddingProvider):
    """Client for a hosted embedding endpoint.

    Protocol: POST JSON with either {"image_b64": <base64 PNG>} or
    {"text": <string>}; response is {"vector": [float, ...]}. Transient
    transport errors and 5xx responses are retried with exponential
    backoff before raising ProviderUnavailable.
    """

    def __init__(
        self,
        endpoint: str,
        api_key: str | None = None,
        timeout: float = 30.0,
        retries: int = 3,
        backoff: float = 0.25,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint
        self.retries = retries
        self.backoff = backoff
        digest = hashlib.sha256(endpoint.encode()).hexdigest()[:12]
        self.provider_id = f"http-{digest}"
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)

    def _post(self, payload: dict) -> np.ndarray:
        last_error: Exception | None = None
        for attempt in range(self.retries):
            try:
                resp = self._client.post(self.endpoint, json=payload)
                if resp.status_code >= 500:
                    raise httpx.HTTPStatusError(
                        f"server error {resp.status_code}", request=resp.request, response=resp
                    )
                resp.raise_for_status()
                return as_vector(resp.json()["vector"])
            except (httpx.TransportError, httpx.HTTPStatusError) as exc:
                last_error = exc
                if attempt + 1 < self.retries:
                    time.sleep(self.backoff * 2**attempt)
        raise ProviderUnavailable(
            f"embedding endpoint {self.endpoint} unavailable after {self.retries} attempts: "
            f"{last_error}",
            retries=self.retries,
        )

    def embed_image(self, pixels: np.ndarray) -> np.ndarray:
        b64 = base64.b64encode(to_png_bytes(pixels)).decode("ascii")
        return self._post({"image_b64": b64})

    def embed_text(self, text: str) -> np.ndarray:
        return self._post({"text": text})

    def check_health(self) -> bool:
        try:
            self._client.post(self.endpoint, json={"text": "health probe"})
            return True
        except httpx.TransportError:
            return False


class EmbeddingCache:
    """Append-only JSONL cache of embeddings for one provider.

    Records are {"id", "sha256", "vector"}; a record is a hit only when both
    the image id and the content hash match, so stale entries for changed
    image bytes are ignored. Writes are serialized behind a lock.
    """

    def __init__(self, path: Path | str):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._records: dict[tuple[str, str], np.ndarray] = {}
        if self.path.exists():
            for line in self.path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                vec = np.asarray(rec["vector"], dtype=np.float64)
                self._records[(rec["id"], rec["sha256"])] = vec

    def __len__(self) -> int:
        return len(self._records)

    def get(self, image_id: str, sha256: str) -> np.ndarray | None:
        vec = self._records.get((image_id, sha256))
        return None if vec is None else vec.copy()

    def put(self, image_id: str, sha256: str, vector: np.ndarray) -> None:
        rec = {"id": image_id, "sha256": sha256, "vector": list(map(float, vector))}
        with self._lock:
            self._records[(image_id, sha256)] = np.asarray(vector, dtype=np.float64)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open("a") as fh:
                fh.write(json.dumps(rec) + "\n")


@dataclass
class EmbeddingStore:
    """Training embeddings partitioned into positives and negatives."""

    dim: int
    positives: list[tuple[str, np.ndarray]]
    negatives: list[tuple[str, np.ndarray]]
    provider_id: str = ""

    def __post_init__(self):
        for name, part in (("positives", self.positives), ("negatives", self.negatives)):
            for image_id, vec in part:
                if vec.shape != (self.dim,):
                    raise DimensionMismatch(
                        f"{name} entry {image_id!r} has dimension {vec.shape}, store dim {self.dim}"
                    )

    @property
    def size(self) -> int:
        return len(self.positives) + len(self.negatives)


def build_store(
    manifest: DatasetManifest,
    labeled_indices: Iterable[int],
    provider: EmbeddingProvider,
    cache: EmbeddingCache | None = None,
    parallelism: int = 4,
) -> EmbeddingStore:
    """Embed the given train entries and partition them by label.

    Cached embeddings are reused (keyed by image id plus pixel content
    hash) so warm re-runs make zero provider calls. Individual provider
    failures are collected and reported together as PartialFailure.
    """
    indices = list(labeled_indices)
    train_set = set(manifest.train)
    bad = [i for i in indices if i not in train_set]
    if bad:
        raise ValueError(f"labeled indices {bad} are not in the train split")

    results: dict[int, tuple[str, int, np.ndarray]] = {}
    failures: dict[str, Exception] = {}
    lock = threading.Lock()

    def embed_one(index: int) -> None:
        entry = manifest.entries[index]
        try:
            image = manifest.load_image(index)
            sha = pixel_sha256(image.pixels)
            vec = cache.get(entry.id, sha) if cache is not None else None
            if vec is None:
                vec = as_vector(provider.embed_image(image.pixels))
                if cache is not None:
                    cache.put(entry.id, sha, vec)
            with lock:
                results[index] = (entry.id, entry.label, vec)
        except Exception as exc:  # collected; reported in one PartialFailure
            with lock:
                failures[entry.id] = exc

    if parallelism > 1 and len(indices) > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            list(pool.map(embed_one, indices))
    else:
        for index in indices:
            embed_one(index)

    if failures:
        raise PartialFailure(failures.keys())

    positives: list[tuple[str, np.ndarray]] = []
    negatives: list[tuple[str, np.ndarray]] = []
    for index in indices:
        image_id, label, vec = results[index]
        (positives if label == POSITIVE else negatives).append((image_id, vec))
    if not positives:
        raise EmptyPartition("store needs at least one positive example")
    if not negatives:
        raise EmptyPartition("store needs at least one negative example")

    dim = positives[0][1].shape[0]
    return EmbeddingStore(
        dim=dim, positives=positives, negatives=negatives, provider_id=provider.provider_id
    )


def _similarities(part: list[tuple[str, np.ndarray]], q: np.ndarray, q_norm_sq: float):
    """Cosine of the query against every member, one np.dot per candidate.

    A single BLAS matrix-vector product would be faster but sums each row
    in a position-dependent order, so bit-identical vectors stored at
    different rows can land one ulp apart and break exact tie handling.
    Per-candidate dots make the similarity a pure function of the vector's
    contents, matching ``cosine()`` exactly. The stores here are small
    (tens of thousands of rows at most), so the cost is negligible.
    """
    for image_id, vec in part:
        sim = float(np.dot(vec, q)) / math.sqrt(float(np.dot(vec, vec)) * q_norm_sq)
        yield image_id, sim


def _partition_argmax(
    part: list[tuple[str, np.ndarray]], q: np.ndarray, q_norm_sq: float
) -> tuple[str, float]:
    """Most-similar member of one partition; exact ties go to the lowest id."""
    best_id: str | None = None
    best_sim = -np.inf
    for image_id, sim in _similarities(part, q, q_norm_sq):
        if sim > best_sim or (sim == best_sim and image_id < best_id):
            best_id, best_sim = image_id, sim
    return best_id, best_sim


def retrieve_visrag(store: EmbeddingStore, query) -> tuple[str, float, str, float]:
    """Return (positive id, similarity, negative id, similarity) for a query.

    Each partition is scanned exhaustively for the argmax cosine similarity,
    with exact ties broken toward the lexicographically lowest image id.
    """
    q = as_vector(query)
    if q.shape[0] != store.dim:
        raise DimensionMismatch(f"query dimension {q.shape[0]} != store dimension {store.dim}")
    if not store.positives or not store.negatives:
        raise EmptyPartition("both partitions must be non-empty before retrieval")
    q_norm_sq = float(np.dot(q, q))
    pos_id, pos_sim = _partition_argmax(store.positives, q, q_norm_sq)
    neg_id, neg_sim = _partition_argmax(store.negatives, q, q_norm_sq)
    return pos_id, pos_sim, neg_id, neg_sim


def knn_classify(store: EmbeddingStore, query, k: int = 3) -> Prediction:
    """Majority vote among the k nearest stored embeddings by cosine.

    The score is the positive-neighbor fraction; similarity ties are broken
    toward the lowest id and an even-k split votes negative.
    """
    q = as_vector(query)
    if store.size == 0:
        raise EmptyStore("store has no embeddings")
    if q.shape[0] != store.dim:
        raise DimensionMismatch(f"query dimension {q.shape[0]} != store dimension {store.dim}")
    if not 1 <= k <= store.size:
        raise ValueError(f"k={k} outside [1, {store.size}]")

    q_norm_sq = float(np.dot(q, q))
    ranked: list[tuple[float, str, int]] = []
    for label, part in ((POSITIVE, store.positives), (-1, store.negatives)):
        ranked.extend((sim, i, label) for i, sim in _similarities(part, q, q_norm_sq))
    ranked.sort(key=lambda t: (-t[0], t[1]))

    top = ranked[:k]
    n_pos = sum(1 for _, _, label in top if label == POSITIVE)
    score = n_pos / k
    label = POSITIVE if score > 0.5 else -1
    return Prediction(label=label, confidence=max(score, 1.0 - score))


def zeroshot_classify(
    provider: EmbeddingProvider, pixels: np.ndarray, pos_text: str, neg_text: str
) -> Prediction:
    """Compare the image embedding against the two label-text embeddings.

    Positive iff the positive-text similarity strictly exceeds the negative;
    the score is a temperature-1 softmax over the two raw similarities.
    """
    e_img = as_vector(provider.embed_image(pixels))
    s_pos = cosine(e_img, provider.embed_text(pos_text))
    s_neg = cosine(e_img, provider.embed_text(neg_text))
    score = 1.0 / (1.0 + math.exp(s_neg - s_pos))  # softmax probability of the positive text
    label = POSITIVE if s_pos > s_neg else -1
    return Prediction(label=label, confidence=max(score, 1.0 - score))
