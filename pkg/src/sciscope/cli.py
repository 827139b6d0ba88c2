"""Operator entry points: embedding, probe training, experiment runs,
report aggregation, tool-usage analytics, and serving.

Every subcommand echoes its effective configuration (after defaults and
environment merging) before acting, so a run can be reproduced from its
own output. Exit codes: 0 success, 1 reserved for CI metric gates, 2
operational error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .agent import HttpLmmClient, PolicyLmmClient, ScriptedLmmClient, simulation_policy
from .data import load_manifest, subsample_labeled
from .embeddings import (
    EmbeddingCache,
    FixtureEmbeddingProvider,
    HttpEmbeddingProvider,
    PixelStatsEmbeddingProvider,
    build_store,
    pixel_sha256,
)
from .errors import SciscopeError
from .evaluation import (
    ExperimentConfig,
    ExperimentDeps,
    MetricsReport,
    emit_report,
    run_experiment,
    tool_usage_report,
    tool_usage_to_csv,
)
from .agent import Transcript
from .geo import FixtureTileProvider, HttpTileProvider
from .probe import TrainConfig, save_params, train_mlp

OK, METRIC_FAILURE, OPERATIONAL_ERROR = 0, 1, 2


def make_embedding_provider(spec: str):
    """Resolve a provider id: fixture[:dim], pixelstats[:dim], or a URL."""
    if spec.startswith("fixture"):
        dim = int(spec.split(":", 1)[1]) if ":" in spec else 64
        return FixtureEmbeddingProvider(dim=dim)
    if spec.startswith("pixelstats"):
        dim = int(spec.split(":", 1)[1]) if ":" in spec else 16
        return PixelStatsEmbeddingProvider(dim=dim)
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpEmbeddingProvider(spec, api_key=os.environ.get("SCISCOPE_EMBED_KEY"))
    raise SciscopeError(f"unknown embedding provider spec {spec!r}")


def make_tile_provider(spec: str):
    if spec == "fixture":
        return FixtureTileProvider()
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpTileProvider(spec, api_key=os.environ.get("SCISCOPE_TILE_KEY"))
    raise SciscopeError(f"unknown tile provider spec {spec!r}")


def make_llm_factory(spec: str):
    """Resolve an LMM backend id: policy, scripted:<path>, or http."""
    if spec == "policy":
        return lambda: PolicyLmmClient(simulation_policy)
    if spec.startswith("scripted:"):
        turns = json.loads(Path(spec.split(":", 1)[1]).read_text())
        return lambda: ScriptedLmmClient(turns)
    if spec == "http":
        endpoint = os.environ.get("SCISCOPE_LMM_ENDPOINT")
        model = os.environ.get("SCISCOPE_LMM_MODEL", "gpt-4o")
        if not endpoint:
            raise SciscopeError("llm backend 'http' needs SCISCOPE_LMM_ENDPOINT")
        return lambda: HttpLmmClient(
            endpoint, model=model, api_key=os.environ.get("SCISCOPE_LMM_KEY")
        )
    raise SciscopeError(f"unknown llm backend {spec!r}")


def _echo_config(name: str, config: dict) -> None:
    print(f"effective config ({name}):")
    print(json.dumps(config, indent=2, sort_keys=True))


def cmd_embed(args) -> int:
    config = {
        "manifest": args.manifest,
        "provider": args.provider,
        "out": args.out,
        "parallelism": args.parallelism,
    }
    _echo_config("embed", config)
    manifest = load_manifest(args.manifest)
    provider = make_embedding_provider(args.provider)
    cache = EmbeddingCache(args.out)

    cached = embedded = 0
    failures: list[str] = []
    for index in range(len(manifest.entries)):
        entry = manifest.entries[index]
        try:
            image = manifest.load_image(index)
            sha = pixel_sha256(image.pixels)
            if cache.get(entry.id, sha) is not None:
                cached += 1
                continue
            cache.put(entry.id, sha, provider.embed_image(image.pixels))
            embedded += 1
        except Exception as exc:
            failures.append(entry.id)
            print(f"embed failed for {entry.id}: {exc}", file=sys.stderr)
    print(f"{cached} cached, {embedded} embedded")
    if failures:
        print(f"failed ids: {', '.join(sorted(failures))}", file=sys.stderr)
        return OPERATIONAL_ERROR
    return OK


def cmd_train_probe(args) -> int:
    config = {
        "manifest": args.manifest,
        "provider": args.provider,
        "cache": args.cache,
        "fraction": args.fraction,
        "seed": args.seed,
        "out": args.out,
    }
    _echo_config("train-probe", config)
    manifest = load_manifest(args.manifest)
    provider = make_embedding_provider(args.provider)
    cache = EmbeddingCache(args.cache) if args.cache else None
    labeled = subsample_labeled(manifest, args.fraction, args.seed)
    store = build_store(manifest, labeled, provider, cache=cache)
    pairs = [(vec, 1) for _, vec in store.positives]
    pairs += [(vec, -1) for _, vec in store.negatives]
    train_config = TrainConfig(seed=args.seed)
    params = train_mlp(pairs, train_config)
    save_params(params, args.out, train_config)
    print(f"trained on {len(pairs)} embeddings; params written to {args.out}")
    return OK


def cmd_run(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    provider_spec = doc.pop("embedding_provider", "pixelstats")
    tile_spec = doc.pop("tile_provider", "fixture")
    cache_path = doc.pop("embedding_cache", None)
    config = ExperimentConfig.from_json(doc)
    _echo_config(
        "run",
        {
            **config.to_json(),
            "embedding_provider": provider_spec,
            "tile_provider": tile_spec,
            "embedding_cache": cache_path,
        },
    )
    deps = ExperimentDeps(
        embedder=make_embedding_provider(provider_spec),
        make_llm=make_llm_factory(config.llm_backend) if config.method.startswith("lmm") else None,
        tile_provider=make_tile_provider(tile_spec),
        cache=EmbeddingCache(cache_path) if cache_path else None,
    )
    result = run_experiment(config, deps)
    print(f"metrics written to {result.output_dir / 'metrics.json'}")
    print(json.dumps(result.metrics.to_json(), indent=2, sort_keys=True))
    return OK


def cmd_report(args) -> int:
    _echo_config("report", {"in": args.inputs, "out": args.out})
    results = {}
    for directory in args.inputs:
        directory = Path(directory)
        metrics_path = directory / "metrics.json"
        config_path = directory / "config_echo.json"
        if not metrics_path.exists() or not config_path.exists():
            raise SciscopeError(f"{directory} is not an experiment artifact directory")
        config = json.loads(config_path.read_text())
        metrics = MetricsReport.from_json(json.loads(metrics_path.read_text()))
        key = (config["dataset_kind"], config["labeled_fraction"], config["method"])
        results[key] = metrics
    csv_path, md_path = emit_report(results, args.out)
    print(f"wrote {csv_path} and {md_path}")
    return OK


def cmd_tool_usage(args) -> int:
    _echo_config("tool-usage", {"in": args.inputs, "out": args.out})
    transcripts = []
    truths: dict[str, int] = {}
    for directory in args.inputs:
        directory = Path(directory)
        for path in sorted((directory / "transcripts").glob("*.json")):
            transcripts.append(Transcript.from_json(json.loads(path.read_text())))
        predictions = directory / "predictions.csv"
        if predictions.exists():
            import csv as _csv

            with predictions.open() as fh:
                for row in _csv.DictReader(fh):
                    truths[row["id"]] = int(row["true_label"])
    if not transcripts:
        raise SciscopeError("no transcripts found under the given directories")
    report = tool_usage_report(transcripts, truths)
    path = tool_usage_to_csv(report, args.out)
    print(f"wrote {path}")
    return OK


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app
    from .service_config import build_runtime_from_config

    doc = json.loads(Path(args.config).read_text())
    _echo_config("serve", {**doc, "host": args.host, "port": args.port})
    runtime = build_runtime_from_config(doc)
    runtime.start()
    app = create_app(runtime, static_dir=doc.get("static_dir"))
    uvicorn.run(app, host=args.host, port=args.port)
    return OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sciscope")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("embed", help="embed every manifest image into a cache file")
    p.add_argument("--manifest", required=True)
    p.add_argument("--provider", default="pixelstats")
    p.add_argument("--out", required=True)
    p.add_argument("--parallelism", type=int, default=4)
    p.set_defaults(func=cmd_embed)

    p = sub.add_parser("train-probe", help="train the MLP probe on cached embeddings")
    p.add_argument("--manifest", required=True)
    p.add_argument("--provider", default="pixelstats")
    p.add_argument("--cache", default=None)
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train_probe)

    p = sub.add_parser("run", help="run one experiment config")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate experiment artifacts into tables")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("tool-usage", help="aggregate tool-usage analytics from transcripts")
    p.add_argument("--in", dest="inputs", nargs="+", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_tool_usage)

    p = sub.add_parser("serve", help="run the classification service")
    p.add_argument("--config", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SciscopeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return OPERATIONAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
