"""Run every method variant offline on the synthetic dataset, in both
labeled-data regimes, then emit the combined tables and the tool-usage
analytics.

Run:  python demos/06_experiments_and_reports.py
"""

from _common import build_demo_dataset, fresh_output

from sciscope.agent import PolicyLmmClient, simulation_policy
from sciscope.data import load_manifest
from sciscope.embeddings import PixelStatsEmbeddingProvider
from sciscope.evaluation import (
    ExperimentConfig,
    ExperimentDeps,
    emit_report,
    run_experiment,
    tool_usage_report,
    tool_usage_to_csv,
)
from sciscope.geo import FixtureTileProvider

out = fresh_output("06_experiments")
manifest = load_manifest(build_demo_dataset(out / "data", n_train_pos=16, n_train_neg=16, n_test=10))

deps = ExperimentDeps(
    embedder=PixelStatsEmbeddingProvider(dim=16),
    make_llm=lambda: PolicyLmmClient(simulation_policy),
    tile_provider=FixtureTileProvider(),
    manifest=manifest,
)

results = {}
agent_transcripts = []
truths = {}
for method in ("knn", "zeroshot_embed", "mlp_probe", "lmm_full"):
    for fraction in (0.2, 1.0):
        config = ExperimentConfig(
            dataset_kind="eelgrass",
            method=method,
            manifest_path="(in-memory)",
            output_dir=str(out / f"{method}-{int(fraction * 100)}"),
            labeled_fraction=fraction,
            test_n=10,
            seed=0,
        )
        result = run_experiment(config, deps)
        results[("eelgrass", fraction, method)] = result.metrics
        report = result.metrics
        auc = "  --" if report.auc is None else f"{report.auc:.2f}"
        print(f"{method:>14} @ {int(fraction * 100):>3}%: "
              f"acc {report.accuracy:.2f}  f1 {report.f1:.2f}  auc {auc}")
        if method == "lmm_full" and fraction == 1.0:
            agent_transcripts = result.transcripts
            truths = {
                manifest.entries[i].id: manifest.entries[i].label for i in manifest.test
            }

csv_path, md_path = emit_report(results, out / "report")
print(f"\ntables written to {csv_path} and {md_path}")

usage = tool_usage_report(agent_transcripts, truths)
usage_path = tool_usage_to_csv(usage, out / "tool_usage.csv")
print(f"tool usage written to {usage_path}:")
for name, stats in usage.items():
    if stats.call_count:
        print(f"  {name}: {stats.call_count} call(s), "
              f"accuracy when called {stats.accuracy_when_called:.2f}")
