import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from sciscope.data import load_manifest


def make_image(seed: int, size=(8, 8), base: int | None = None) -> np.ndarray:
    """Deterministic small RGB raster; ``base`` shifts the mean brightness."""
    rng = np.random.default_rng(seed)
    if base is None:
        return rng.integers(0, 256, size=(size[1], size[0], 3), dtype=np.uint8)
    noise = rng.integers(-40, 41, size=(size[1], size[0], 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def write_png(path: Path, pixels: np.ndarray) -> None:
    arr = pixels[:, :, 0] if pixels.shape[2] == 1 else pixels
    Image.fromarray(arr).save(path)


def build_dataset(
    tmp_path: Path,
    n_train_pos: int = 3,
    n_train_neg: int = 3,
    n_test: int = 2,
    name: str = "toy",
    geo: bool = False,
    separable: bool = False,
):
    """Write a small manifest plus its PNG files and return (path, doc).

    ``separable=True`` makes positives bright and negatives dark so pixel-
    statistics embeddings cluster by class. Test entries alternate labels.
    """
    images_dir = tmp_path / "images"
    images_dir.mkdir(exist_ok=True)
    entries = []
    idx = 0

    def add(label: int, split_bucket: list[int], seed: int):
        nonlocal idx
        base = None
        if separable:
            base = 210 if label == 1 else 50
        pixels = make_image(seed, base=base)
        fname = f"img{idx:03d}.png"
        write_png(images_dir / fname, pixels)
        entry = {"id": f"{name}-{idx:03d}", "path": f"images/{fname}", "label": label}
        if geo:
            entry.update({"lat": 10.0 + idx * 0.01, "lon": 20.0 + idx * 0.01, "zoom": 16})
        entries.append(entry)
        split_bucket.append(idx)
        idx += 1

    train: list[int] = []
    test: list[int] = []
    for i in range(n_train_pos):
        add(1, train, seed=100 + i)
    for i in range(n_train_neg):
        add(-1, train, seed=200 + i)
    for i in range(n_test):
        add(1 if i % 2 == 0 else -1, test, seed=300 + i)

    doc = {"name": name, "entries": entries, "splits": {"train": train, "test": test}}
    path = tmp_path / "manifest.json"
    path.write_text(json.dumps(doc, indent=2))
    return path, doc


@pytest.fixture
def toy_manifest(tmp_path):
    path, _ = build_dataset(tmp_path)
    return load_manifest(path)


@pytest.fixture
def separable_manifest(tmp_path):
    path, _ = build_dataset(
        tmp_path, n_train_pos=12, n_train_neg=12, n_test=10, separable=True
    )
    return load_manifest(path)


@pytest.fixture
def geo_manifest(tmp_path):
    path, _ = build_dataset(tmp_path, geo=True, separable=True)
    return load_manifest(path)
