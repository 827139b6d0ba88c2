"""Dataset domain types, manifest IO, and deterministic splitting.

A dataset is described by a JSON manifest listing image files with binary
labels (+1 / -1) and optional geographic metadata, plus named train/test
splits of entry indices. Everything downstream (embedding stores, probes,
experiments, the service) consumes these types.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import MalformedManifest, MissingFile, SplitOverlap, TooFewItems

POSITIVE = 1
NEGATIVE = -1

DATASET_KINDS = ("aquaculture", "eelgrass", "solar")

# Native square image size (pixels) of each supported dataset kind.
NATIVE_SIZE = {"aquaculture": 640, "eelgrass": 128, "solar": 320}

DEFAULT_ZOOM = 16


@dataclass(frozen=True)
class GeoPoint:
    """A geographic anchor: center latitude/longitude plus map zoom level."""

    lat: float
    lon: float
    zoom: int = DEFAULT_ZOOM

    def __post_init__(self):
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} outside [-180, 180]")
        if self.zoom < 0:
            raise ValueError(f"zoom {self.zoom} must be >= 0")


def check_raster(pixels: np.ndarray) -> np.ndarray:
    """Validate an H x W x C uint8 raster (C in {1, 3}) and return it."""
    if not isinstance(pixels, np.ndarray):
        raise ValueError("pixels must be a numpy array")
    if pixels.ndim != 3 or pixels.shape[2] not in (1, 3):
        raise ValueError(f"expected H x W x C raster with C in {{1, 3}}, got shape {pixels.shape}")
    if pixels.shape[0] < 1 or pixels.shape[1] < 1:
        raise ValueError("raster must have positive height and width")
    if pixels.dtype != np.uint8:
        raise ValueError(f"raster must be uint8, got {pixels.dtype}")
    return pixels


@dataclass(frozen=True)
class LabeledImage:
    """A raster with a binary label and optional geographic metadata."""

    id: str
    pixels: np.ndarray
    label: int
    geo: GeoPoint | None = None
    source_path: str = ""

    def __post_init__(self):
        check_raster(self.pixels)
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be +1 or -1, got {self.label}")


@dataclass(frozen=True)
class QueryImage:
    """An unlabeled raster submitted for classification (e.g. an upload)."""

    id: str
    pixels: np.ndarray
    geo: GeoPoint | None = None

    def __post_init__(self):
        check_raster(self.pixels)


@dataclass(frozen=True)
class Prediction:
    """A binary decision with a confidence in [0, 1].

    ``score`` is the derived probability-of-positive used for ranking and
    AUC: equal to the confidence for a positive call and its complement for
    a negative one. ``inconclusive`` marks the deterministic fallback used
    when an agent never produced a parseable answer.
    """

    label: int
    confidence: float
    inconclusive: bool = False

    def __post_init__(self):
        if self.label not in (POSITIVE, NEGATIVE):
            raise ValueError(f"label must be +1 or -1, got {self.label}")
        if not 0.0 <= self.confidence <= 1.0 or not math.isfinite(self.confidence):
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")

    @property
    def score(self) -> float:
        return self.confidence if self.label == POSITIVE else 1.0 - self.confidence

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "confidence": self.confidence,
            "score": self.score,
            "inconclusive": self.inconclusive,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "Prediction":
        return cls(
            label=int(obj["label"]),
            confidence=float(obj["confidence"]),
            inconclusive=bool(obj.get("inconclusive", False)),
        )


@dataclass(frozen=True)
class ManifestEntry:
    id: str
    path: str
    label: int
    geo: GeoPoint | None = None


@dataclass
class DatasetManifest:
    """A named image collection with train/test splits of entry indices."""

    name: str
    entries: list[ManifestEntry]
    train: list[int]
    test: list[int]
    base_dir: Path = field(default_factory=Path, compare=False)

    @property
    def positive_fraction_hint(self) -> float:
        if not self.entries:
            return 0.0
        return sum(1 for e in self.entries if e.label == POSITIVE) / len(self.entries)

    def entry_by_id(self, image_id: str) -> ManifestEntry:
        for entry in self.entries:
            if entry.id == image_id:
                return entry
        raise KeyError(image_id)

    def image_path(self, index: int) -> Path:
        path = Path(self.entries[index].path)
        return path if path.is_absolute() else self.base_dir / path

    def load_image(self, index: int) -> LabeledImage:
        entry = self.entries[index]
        pixels = load_raster(self.image_path(index))
        return LabeledImage(
            id=entry.id,
            pixels=pixels,
            label=entry.label,
            geo=entry.geo,
            source_path=str(self.image_path(index)),
        )

    def load_image_by_id(self, image_id: str) -> LabeledImage:
        for i, entry in enumerate(self.entries):
            if entry.id == image_id:
                return self.load_image(i)
        raise KeyError(image_id)


def load_raster(path: Path | str) -> np.ndarray:
    """Decode a PNG/JPEG file into an H x W x C uint8 raster (C in {1, 3})."""
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"image file not found: {path}")
    with Image.open(path) as img:
        if img.mode == "L":
            arr = np.asarray(img, dtype=np.uint8)[:, :, None]
        else:
            arr = np.asarray(img.convert("RGB"), dtype=np.uint8)
    return check_raster(arr)


def _coerce_label(raw, where: str) -> int:
    if raw in (POSITIVE, NEGATIVE):
        return int(raw)
    if raw == 0:  # 0/1-labeled external data: 0 means negative
        return NEGATIVE
    raise MalformedManifest(f"{where}: label must be 1 or -1, got {raw!r}")


def _parse_geo(raw: dict, where: str) -> GeoPoint | None:
    has_lat, has_lon = "lat" in raw, "lon" in raw
    if not has_lat and not has_lon:
        if "zoom" in raw:
            raise MalformedManifest(f"{where}: zoom given without lat/lon")
        return None
    if not (has_lat and has_lon):
        raise MalformedManifest(f"{where}: lat and lon must be given together")
    try:
        return GeoPoint(
            lat=float(raw["lat"]),
            lon=float(raw["lon"]),
            zoom=int(raw.get("zoom", DEFAULT_ZOOM)),
        )
    except (TypeError, ValueError) as exc:
        raise MalformedManifest(f"{where}: {exc}") from exc


def load_manifest(path: Path | str) -> DatasetManifest:
    """Load and validate a dataset manifest from a JSON file.

    Raises MissingFile if the file does not exist, MalformedManifest for any
    schema/validity problem (naming the offending field, and the line for
    JSON syntax errors), and SplitOverlap when train and test intersect.
    """
    path = Path(path)
    if not path.exists():
        raise MissingFile(f"manifest not found: {path}")
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise MalformedManifest(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    manifest = parse_manifest(doc)
    manifest.base_dir = path.parent
    return manifest


def parse_manifest(doc: dict) -> DatasetManifest:
    """Validate an already-decoded manifest document."""
    if not isinstance(doc, dict):
        raise MalformedManifest("manifest root must be an object")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise MalformedManifest("field 'name': must be a non-empty string")
    raw_entries = doc.get("entries")
    if not isinstance(raw_entries, list) or not raw_entries:
        raise MalformedManifest("field 'entries': must be a non-empty list")

    entries: list[ManifestEntry] = []
    seen_ids: set[str] = set()
    for i, raw in enumerate(raw_entries):
        where = f"entries[{i}]"
        if not isinstance(raw, dict):
            raise MalformedManifest(f"{where}: must be an object")
        entry_id = raw.get("id")
        if not isinstance(entry_id, str) or not entry_id:
            raise MalformedManifest(f"{where}.id: must be a non-empty string")
        if entry_id in seen_ids:
            raise MalformedManifest(f"{where}.id: duplicate id {entry_id!r}")
        seen_ids.add(entry_id)
        entry_path = raw.get("path")
        if not isinstance(entry_path, str) or not entry_path:
            raise MalformedManifest(f"{where}.path: must be a non-empty string")
        if "label" not in raw:
            raise MalformedManifest(f"{where}.label: missing")
        label = _coerce_label(raw["label"], f"{where}.label")
        geo = _parse_geo(raw, where)
        entries.append(ManifestEntry(id=entry_id, path=entry_path, label=label, geo=geo))

    splits = doc.get("splits")
    if not isinstance(splits, dict):
        raise MalformedManifest("field 'splits': must be an object with 'train' and 'test'")
    split_lists: dict[str, list[int]] = {}
    for split_name in ("train", "test"):
        raw_split = splits.get(split_name)
        if not isinstance(raw_split, list):
            raise MalformedManifest(f"splits.{split_name}: must be a list of entry indices")
        indices: list[int] = []
        for j, idx in enumerate(raw_split):
            if not isinstance(idx, int) or isinstance(idx, bool) or not 0 <= idx < len(entries):
                raise MalformedManifest(
                    f"splits.{split_name}[{j}]: index {idx!r} does not reference an entry"
                )
            indices.append(idx)
        if len(set(indices)) != len(indices):
            raise MalformedManifest(f"splits.{split_name}: contains duplicate indices")
        split_lists[split_name] = indices

    overlap = set(split_lists["train"]) & set(split_lists["test"])
    if overlap:
        raise SplitOverlap(f"splits.train and splits.test share indices {sorted(overlap)}")

    train_labels = {entries[i].label for i in split_lists["train"]}
    if train_labels != {POSITIVE, NEGATIVE}:
        raise MalformedManifest("splits.train: train needs both classes")

    return DatasetManifest(
        name=name,
        entries=entries,
        train=split_lists["train"],
        test=split_lists["test"],
    )


def manifest_to_json(manifest: DatasetManifest) -> dict:
    entries = []
    for e in manifest.entries:
        rec: dict = {"id": e.id, "path": e.path, "label": e.label}
        if e.geo is not None:
            rec["lat"] = e.geo.lat
            rec["lon"] = e.geo.lon
            rec["zoom"] = e.geo.zoom
        entries.append(rec)
    return {
        "name": manifest.name,
        "entries": entries,
        "splits": {"train": list(manifest.train), "test": list(manifest.test)},
    }


def write_manifest(manifest: DatasetManifest, path: Path | str) -> Path:
    """Serialize a manifest back to its JSON wire format."""
    path = Path(path)
    path.write_text(json.dumps(manifest_to_json(manifest), indent=2, sort_keys=True) + "\n")
    return path


def subsample_labeled(manifest: DatasetManifest, fraction: float, seed: int) -> list[int]:
    """Pick a seeded stratified subsample of the train split.

    Returns ceil(fraction * |train|) entry indices with per-class proportions
    preserved to within one item, in train-split order. ``fraction == 1.0``
    returns the whole train split unchanged.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction {fraction} outside (0, 1]")
    train = manifest.train
    if fraction == 1.0:
        return list(train)

    total = math.ceil(fraction * len(train))
    if total < 2:
        raise TooFewItems(f"fraction {fraction} of {len(train)} train items leaves < 2")

    pos = [i for i in train if manifest.entries[i].label == POSITIVE]
    neg = [i for i in train if manifest.entries[i].label == NEGATIVE]
    n_pos = int(math.floor(total * len(pos) / len(train) + 0.5))
    n_neg = total - n_pos
    if n_pos < 1 or n_neg < 1:
        raise TooFewItems(
            f"stratified sample of size {total} would lack a class "
            f"({n_pos} positive / {n_neg} negative)"
        )

    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(np.array(pos), size=n_pos, replace=False).tolist())
    chosen |= set(rng.choice(np.array(neg), size=n_neg, replace=False).tolist())
    return [i for i in train if i in chosen]


def subsample_test(manifest: DatasetManifest, n: int, seed: int) -> list[int]:
    """Pick a seeded uniform sample without replacement from the test split."""
    test = manifest.test
    if n > len(test):
        raise TooFewItems(f"requested {n} test items but split has {len(test)}")
    if n < 1:
        raise TooFewItems("test subsample must contain at least 1 item")
    rng = np.random.default_rng(seed)
    chosen = set(rng.choice(np.array(test), size=n, replace=False).tolist())
    return [i for i in test if i in chosen]
