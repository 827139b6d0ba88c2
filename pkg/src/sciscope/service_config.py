"""Build a ServiceRuntime from a JSON service configuration.

Config shape:

    {
      "data_dir": "var/service",
      "worker_count": 2,
      "embedding_provider": "pixelstats",
      "tile_provider": "fixture",
      "llm_backend": "policy",
      "datasets": {
        "eelgrass": {"manifest": "data/eelgrass.json", "labeled_fraction": 1.0, "seed": 0}
      }
    }

Each dataset gets its embedding store and probe built at startup from its
manifest's train split; the probe doubles as the registry's prediction
tool.
"""

from __future__ import annotations

from pathlib import Path

from .cli import make_embedding_provider, make_llm_factory, make_tile_provider
from .data import load_manifest, subsample_labeled
from .embeddings import EmbeddingCache, build_store
from .evaluation import DOMAIN_PROMPTS
from .probe import TrainConfig, train_mlp
from .service import DatasetRuntime, ServiceRuntime
from .tools import build_registry


def build_runtime_from_config(doc: dict) -> ServiceRuntime:
    embedder = make_embedding_provider(doc.get("embedding_provider", "pixelstats"))
    tile_provider = make_tile_provider(doc.get("tile_provider", "fixture"))
    make_llm = make_llm_factory(doc.get("llm_backend", "policy"))
    data_dir = Path(doc.get("data_dir", "var/service"))
    cache_path = doc.get("embedding_cache")
    cache = EmbeddingCache(cache_path) if cache_path else None

    datasets: dict[str, DatasetRuntime] = {}
    for kind, spec in doc.get("datasets", {}).items():
        manifest = load_manifest(spec["manifest"])
        labeled = subsample_labeled(
            manifest, spec.get("labeled_fraction", 1.0), spec.get("seed", 0)
        )
        store = build_store(manifest, labeled, embedder, cache=cache)
        pairs = [(vec, 1) for _, vec in store.positives]
        pairs += [(vec, -1) for _, vec in store.negatives]
        probe = train_mlp(pairs, TrainConfig(seed=spec.get("seed", 0)))
        registry = build_registry(
            kind, probe=probe, embedder=embedder, tile_provider=tile_provider
        )
        datasets[kind] = DatasetRuntime(
            kind=kind, manifest=manifest, store=store, registry=registry, probe=probe
        )

    return ServiceRuntime(
        data_dir=data_dir,
        datasets=datasets,
        embedder=embedder,
        make_llm=make_llm,
        tile_provider=tile_provider,
        worker_count=doc.get("worker_count", 2),
        domain_prompts={**DOMAIN_PROMPTS, **doc.get("domain_prompts", {})},
    )
