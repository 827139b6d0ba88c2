"""Metrics, the experiment runner for all method variants, tool-usage
analytics, and table emission.

Metrics are computed from scratch: confusion-based accuracy/precision/
recall/F1 at the predicted labels, and AUC as the Mann-Whitney statistic
over the probability-of-positive score with ties counted 0.5. AUC is
reported as absent (not zero) when the truth is single-class.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .agent import AgentConfig, LmmClient, Transcript, run_inference, save_transcript
from .data import (
    NEGATIVE,
    POSITIVE,
    DatasetManifest,
    Prediction,
    load_manifest,
    subsample_labeled,
    subsample_test,
)
from .embeddings import (
    EmbeddingCache,
    EmbeddingProvider,
    EmbeddingStore,
    build_store,
    knn_classify,
    pixel_sha256,
    zeroshot_classify,
)
from .errors import MissingTruth, TooFewItems
from .geo import TileProvider
from .probe import MlpParams, TrainConfig, mlp_forward, train_mlp
from .tools import REGISTRY_TOOL_NAMES, build_registry

METHODS = (
    "knn",
    "zeroshot_embed",
    "mlp_probe",
    "lmm_zeroshot",
    "lmm_visrag",
    "lmm_tools",
    "lmm_full",
)
LMM_METHODS = {"lmm_zeroshot", "lmm_visrag", "lmm_tools", "lmm_full"}

PREDICTIONS_CSV_HEADER = [
    "id",
    "true_label",
    "pred_label",
    "confidence",
    "score",
    "inconclusive",
    "n_tool_calls",
]

ZEROSHOT_TEXTS = {
    "aquaculture": (
        "a satellite image of aquaculture ponds",
        "a satellite image without aquaculture ponds",
    ),
    "eelgrass": (
        "a photo of an eelgrass blade with wasting disease lesions",
        "a photo of a healthy eelgrass blade",
    ),
    "solar": (
        "a satellite image containing solar panels",
        "a satellite image without solar panels",
    ),
}

DOMAIN_PROMPTS = {
    "aquaculture": (
        "You are an expert analyst of satellite imagery deciding whether the test image "
        "contains aquaculture ponds. Aquaculture ponds are artificial water bodies with "
        "regular geometric outlines, often clustered near rivers or coasts. Answer positive "
        "if ponds are present and negative otherwise."
    ),
    "eelgrass": (
        "You are a marine ecologist examining a close-up photo of an eelgrass blade for "
        "eelgrass wasting disease. Diseased blades show dark necrotic lesions and blotches. "
        "Answer positive if the blade shows disease and negative if it is healthy."
    ),
    "solar": (
        "You are an analyst of aerial imagery deciding whether the test image contains solar "
        "panels. Panels appear as dark rectangular arrays with regular grid structure, usually "
        "on rooftops or open ground. Answer positive if panels are present and negative "
        "otherwise."
    ),
}


@dataclass(frozen=True)
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    auc: float | None
    n: int
    inconclusive_count: int
    tp: int
    fp: int
    tn: int
    fn: int

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "MetricsReport":
        return cls(**doc)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """Ranks 1..n with ties sharing their average rank."""
    order = np.argsort(scores, kind="mergesort")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and scores[order[j + 1]] == scores[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auc_score(truths: np.ndarray, scores: np.ndarray) -> float | None:
    """Mann-Whitney AUC with 0.5 credit for score ties; None if single-class."""
    pos = truths == POSITIVE
    n_pos = int(pos.sum())
    n_neg = len(truths) - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(np.asarray(scores, dtype=np.float64))
    rank_sum = float(ranks[pos].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def compute_metrics(pairs: list[tuple[int, Prediction]]) -> MetricsReport:
    """Confusion-based metrics plus AUC for (true label, prediction) pairs."""
    if not pairs:
        raise TooFewItems("cannot compute metrics over an empty evaluation set")
    truths = np.array([t for t, _ in pairs])
    pred_labels = np.array([p.label for _, p in pairs])
    scores = np.array([p.score for _, p in pairs])

    tp = int(np.sum((pred_labels == POSITIVE) & (truths == POSITIVE)))
    fp = int(np.sum((pred_labels == POSITIVE) & (truths == NEGATIVE)))
    tn = int(np.sum((pred_labels == NEGATIVE) & (truths == NEGATIVE)))
    fn = int(np.sum((pred_labels == NEGATIVE) & (truths == POSITIVE)))
    n = len(pairs)

    accuracy = (tp + tn) / n
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f1 = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0

    return MetricsReport(
        accuracy=accuracy,
        precision=precision,
        recall=recall,
        f1=f1,
        auc=auc_score(truths, scores),
        n=n,
        inconclusive_count=sum(1 for _, p in pairs if p.inconclusive),
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
    )


# --- tool-usage analytics ---


@dataclass(frozen=True)
class ToolUsage:
    call_count: int
    accuracy_when_called: float | None


def tool_usage_report(
    transcripts: list[Transcript],
    truths: dict[str, int],
    tool_names: list[str] | None = None,
) -> dict[str, ToolUsage]:
    """Per-tool call counts and accuracy over conversations that used it.

    ``call_count`` counts every invocation (repeat calls in one
    conversation each count); ``accuracy_when_called`` averages final-
    prediction correctness over conversations with at least one call, and
    is absent for tools never called.
    """
    if tool_names is None:
        kinds = {t.dataset_kind for t in transcripts if t.dataset_kind in REGISTRY_TOOL_NAMES}
        tool_names = []
        for kind in sorted(kinds):
            tool_names.extend(REGISTRY_TOOL_NAMES[kind])
        called = {c.tool_name for t in transcripts for c in t.tool_calls}
        tool_names.extend(sorted(called - set(tool_names)))

    counts = {name: 0 for name in tool_names}
    outcomes: dict[str, list[bool]] = {name: [] for name in tool_names}
    for transcript in transcripts:
        if transcript.test_image_id not in truths:
            raise MissingTruth(f"no ground truth for transcript {transcript.test_image_id!r}")
        if transcript.final is None:
            raise MissingTruth(f"transcript {transcript.conversation_id} has no final prediction")
        correct = transcript.final.label == truths[transcript.test_image_id]
        seen_here = set()
        for call in transcript.tool_calls:
            if call.tool_name not in counts:
                counts[call.tool_name] = 0
                outcomes[call.tool_name] = []
            counts[call.tool_name] += 1
            if call.tool_name not in seen_here:
                outcomes[call.tool_name].append(correct)
                seen_here.add(call.tool_name)

    report: dict[str, ToolUsage] = {}
    for name in counts:
        conv = outcomes[name]
        report[name] = ToolUsage(
            call_count=counts[name],
            accuracy_when_called=(sum(conv) / len(conv)) if conv else None,
        )
    return report


# --- experiment runner ---


@dataclass
class ExperimentConfig:
    dataset_kind: str
    method: str
    manifest_path: str
    output_dir: str
    labeled_fraction: float = 1.0
    test_n: int = 100
    seed: int = 0
    knn_k: int = 3
    llm_backend: str = "policy"
    max_turns: int = 4
    min_tools_encouraged: int = 3
    pos_text: str | None = None
    neg_text: str | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if not 0.0 < self.labeled_fraction <= 1.0:
            raise ValueError(f"labeled_fraction {self.labeled_fraction} outside (0, 1]")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, doc: dict) -> "ExperimentConfig":
        return cls(**doc)


@dataclass
class ExperimentDeps:
    embedder: EmbeddingProvider
    make_llm: Callable[[], LmmClient] | None = None
    tile_provider: TileProvider | None = None
    cache: EmbeddingCache | None = None
    manifest: DatasetManifest | None = None


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    metrics: MetricsReport
    output_dir: Path
    probe: MlpParams | None = None
    transcripts: list[Transcript] = field(default_factory=list)


def _embed_with_cache(
    deps: ExperimentDeps, image_id: str, pixels: np.ndarray
) -> np.ndarray:
    if deps.cache is not None:
        sha = pixel_sha256(pixels)
        vec = deps.cache.get(image_id, sha)
        if vec is None:
            vec = deps.embedder.embed_image(pixels)
            deps.cache.put(image_id, sha, vec)
        return vec
    return deps.embedder.embed_image(pixels)


def _probe_pairs(store: EmbeddingStore) -> list[tuple[np.ndarray, int]]:
    pairs = [(vec, POSITIVE) for _, vec in store.positives]
    pairs += [(vec, NEGATIVE) for _, vec in store.negatives]
    return pairs


def run_experiment(config: ExperimentConfig, deps: ExperimentDeps) -> ExperimentResult:
    """Run one method variant end to end and write its artifact directory.

    Artifacts: config_echo.json, predictions.csv (one row per test item,
    sorted by id), metrics.json, and transcripts/ for agent methods. A
    failure mid-run leaves a FAILED marker next to any partial output.
    Non-agent methods are bit-reproducible for a fixed seed.
    """
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "config_echo.json").write_text(
        json.dumps(config.to_json(), indent=2, sort_keys=True) + "\n"
    )
    try:
        result = _run_experiment_inner(config, deps, out_dir)
    except Exception as exc:
        (out_dir / "FAILED").write_text(f"{type(exc).__name__}: {exc}\n")
        raise
    return result


def _run_experiment_inner(
    config: ExperimentConfig, deps: ExperimentDeps, out_dir: Path
) -> ExperimentResult:
    manifest = deps.manifest if deps.manifest is not None else load_manifest(config.manifest_path)
    labeled = subsample_labeled(manifest, config.labeled_fraction, config.seed)
    test_indices = subsample_test(manifest, config.test_n, config.seed)

    needs_store = config.method in ("knn", "mlp_probe", "lmm_visrag", "lmm_full")
    needs_probe = config.method in ("mlp_probe", "lmm_tools", "lmm_full")
    needs_tools = config.method in ("lmm_tools", "lmm_full")

    store = None
    if needs_store or needs_probe:
        store = build_store(manifest, labeled, deps.embedder, cache=deps.cache)

    probe = None
    if needs_probe:
        probe = train_mlp(_probe_pairs(store), TrainConfig(seed=config.seed))

    registry = None
    if needs_tools:
        registry = build_registry(
            config.dataset_kind,
            probe=probe,
            embedder=deps.embedder,
            tile_provider=deps.tile_provider,
        )

    pos_text, neg_text = ZEROSHOT_TEXTS.get(config.dataset_kind, ("positive", "negative"))
    pos_text = config.pos_text or pos_text
    neg_text = config.neg_text or neg_text

    agent_config = AgentConfig(
        max_turns=config.max_turns,
        min_tools_encouraged=config.min_tools_encouraged,
        domain_prompt=DOMAIN_PROMPTS.get(config.dataset_kind, ""),
        seed=config.seed,
    )

    rows: list[dict] = []
    pairs: list[tuple[int, Prediction]] = []
    transcripts: list[Transcript] = []

    for index in test_indices:
        image = manifest.load_image(index)
        n_tool_calls = 0

        if config.method == "knn":
            query = _embed_with_cache(deps, image.id, image.pixels)
            pred = knn_classify(store, query, k=config.knn_k)
        elif config.method == "zeroshot_embed":
            pred = zeroshot_classify(deps.embedder, image.pixels, pos_text, neg_text)
        elif config.method == "mlp_probe":
            query = _embed_with_cache(deps, image.id, image.pixels)
            p = mlp_forward(probe, query)
            label = POSITIVE if p > 0.5 else NEGATIVE
            pred = Prediction(label=label, confidence=max(p, 1.0 - p))
        else:
            if deps.make_llm is None:
                raise ValueError(f"method {config.method} needs an LMM client factory")
            llm = deps.make_llm()
            visrag_store = store if config.method in ("lmm_visrag", "lmm_full") else None
            pred, transcript = run_inference(
                image,
                llm,
                agent_config,
                store=visrag_store,
                registry=registry,
                embedder=deps.embedder,
                example_loader=lambda image_id: manifest.load_image_by_id(image_id).pixels,
                dataset_kind=config.dataset_kind,
                conversation_id=f"{config.method}-{config.seed}-{image.id}",
            )
            n_tool_calls = len(transcript.tool_calls)
            transcripts.append(transcript)
            save_transcript(transcript, out_dir)

        pairs.append((image.label, pred))
        rows.append(
            {
                "id": image.id,
                "true_label": image.label,
                "pred_label": pred.label,
                "confidence": pred.confidence,
                "score": pred.score,
                "inconclusive": int(pred.inconclusive),
                "n_tool_calls": n_tool_calls,
            }
        )

    order = sorted(range(len(rows)), key=lambda i: rows[i]["id"])
    rows = [rows[i] for i in order]
    pairs = [pairs[i] for i in order]

    with (out_dir / "predictions.csv").open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=PREDICTIONS_CSV_HEADER)
        writer.writeheader()
        writer.writerows(rows)

    metrics = compute_metrics(pairs)
    (out_dir / "metrics.json").write_text(
        json.dumps(metrics.to_json(), indent=2, sort_keys=True) + "\n"
    )
    return ExperimentResult(
        config=config, metrics=metrics, output_dir=out_dir, probe=probe, transcripts=transcripts
    )


# --- report emission ---


def _fmt(value: float | None) -> str:
    return "—" if value is None else f"{value:.4f}"


def emit_report(
    results: dict[tuple[str, float, str], MetricsReport], out_dir: Path | str
) -> tuple[Path, Path]:
    """Write combined CSV and markdown tables for a set of runs.

    ``results`` maps (dataset_kind, labeled_fraction, method) to metrics.
    The CSV is long-form (one row per run); the markdown table groups
    method rows under dataset x fraction column blocks, mirroring the
    Acc/F1/AUC and precision/recall summary layout. Absent AUC renders
    as an em dash.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    md_path = out_dir / "report.md"

    keys = sorted(results, key=lambda k: (k[0], k[1], METHODS.index(k[2]) if k[2] in METHODS else 99))
    with csv_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["dataset", "labeled_fraction", "method", "accuracy", "f1", "auc", "precision", "recall"]
        )
        for key in keys:
            r = results[key]
            writer.writerow(
                [
                    key[0],
                    key[1],
                    key[2],
                    f"{r.accuracy:.4f}",
                    f"{r.f1:.4f}",
                    _fmt(r.auc),
                    f"{r.precision:.4f}",
                    f"{r.recall:.4f}",
                ]
            )

    columns = sorted({(k[0], k[1]) for k in keys})
    methods = []
    for k in keys:
        if k[2] not in methods:
            methods.append(k[2])
    lines = ["# Results", "", "## Accuracy / F1 / AUC", ""]
    header = "| Method | " + " | ".join(f"{d} {int(f * 100)}% Acc / F1 / AUC" for d, f in columns) + " |"
    lines.append(header)
    lines.append("|" + "---|" * (len(columns) + 1))
    for method in methods:
        cells = []
        for d, f in columns:
            r = results.get((d, f, method))
            cells.append(
                f"{r.accuracy:.2f} / {r.f1:.2f} / {_fmt(r.auc) if r.auc is None else f'{r.auc:.2f}'}"
                if r
                else "—"
            )
        lines.append("| " + method + " | " + " | ".join(cells) + " |")
    lines += ["", "## Precision / Recall", ""]
    header = "| Method | " + " | ".join(f"{d} {int(f * 100)}% Prec / Rec" for d, f in columns) + " |"
    lines.append(header)
    lines.append("|" + "---|" * (len(columns) + 1))
    for method in methods:
        cells = []
        for d, f in columns:
            r = results.get((d, f, method))
            cells.append(f"{r.precision:.2f} / {r.recall:.2f}" if r else "—")
        lines.append("| " + method + " | " + " | ".join(cells) + " |")
    md_path.write_text("\n".join(lines) + "\n")
    return csv_path, md_path


def tool_usage_to_csv(report: dict[str, ToolUsage], path: Path | str) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["tool", "call_count", "accuracy_when_called"])
        for name, usage in report.items():
            writer.writerow(
                [
                    name,
                    usage.call_count,
                    "" if usage.accuracy_when_called is None else f"{usage.accuracy_when_called:.4f}",
                ]
            )
    return path
