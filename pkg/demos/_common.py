"""Shared helpers for the demo scripts: a synthetic offline dataset.

Positives are bright textured tiles, negatives are dark ones, so the
pixel-statistics embedding provider separates the classes and every demo
runs offline with meaningful numbers.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
from PIL import Image

OUTPUT_DIR = Path(__file__).parent / "_output"


def make_tile(seed: int, base: int, size: int = 32) -> np.ndarray:
    rng = np.random.default_rng(seed)
    noise = rng.integers(-45, 46, size=(size, size, 3))
    return np.clip(base + noise, 0, 255).astype(np.uint8)


def build_demo_dataset(
    root: Path,
    n_train_pos: int = 10,
    n_train_neg: int = 10,
    n_test: int = 8,
    geo: bool = False,
    name: str = "demo",
) -> Path:
    """Write a synthetic manifest + images under ``root``; returns the path."""
    images = root / "images"
    images.mkdir(parents=True, exist_ok=True)
    entries, train, test = [], [], []

    def add(label: int, bucket: list[int], seed: int):
        index = len(entries)
        base = 205 if label == 1 else 55
        pixels = make_tile(seed, base)
        filename = f"tile{index:03d}.png"
        Image.fromarray(pixels).save(images / filename)
        entry = {"id": f"{name}-{index:03d}", "path": f"images/{filename}", "label": label}
        if geo:
            entry.update({"lat": -8.75 + index * 0.02, "lon": -63.9 + index * 0.02, "zoom": 15})
        entries.append(entry)
        bucket.append(index)

    for i in range(n_train_pos):
        add(1, train, seed=1000 + i)
    for i in range(n_train_neg):
        add(-1, train, seed=2000 + i)
    for i in range(n_test):
        add(1 if i % 2 == 0 else -1, test, seed=3000 + i)

    manifest = {"name": name, "entries": entries, "splits": {"train": train, "test": test}}
    path = root / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def fresh_output(subdir: str) -> Path:
    out = OUTPUT_DIR / subdir
    out.mkdir(parents=True, exist_ok=True)
    return out
