import json
from pathlib import Path

import pytest

from sciscope.cli import main
from tests.conftest import build_dataset


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


def test_embed_populates_cache_then_reuses(tmp_path, capsys):
    path, doc = build_dataset(tmp_path, n_train_pos=2, n_train_neg=2, n_test=1)
    cache = tmp_path / "cache.jsonl"
    code, out, _ = run_cli(
        capsys, "embed", "--manifest", str(path), "--provider", "fixture:8", "--out", str(cache)
    )
    assert code == 0
    assert "0 cached, 5 embedded" in out
    assert "effective config (embed)" in out
    assert len(cache.read_text().splitlines()) == 5

    code, out, _ = run_cli(
        capsys, "embed", "--manifest", str(path), "--provider", "fixture:8", "--out", str(cache)
    )
    assert code == 0
    assert "5 cached, 0 embedded" in out


def test_embed_bad_manifest_path_exits_2(tmp_path, capsys):
    code, _, err = run_cli(
        capsys,
        "embed",
        "--manifest",
        str(tmp_path / "missing.json"),
        "--out",
        str(tmp_path / "c.jsonl"),
    )
    assert code == 2
    assert "missing.json" in err


def test_train_probe_writes_params(tmp_path, capsys):
    path, _ = build_dataset(tmp_path, n_train_pos=3, n_train_neg=3, n_test=1, separable=True)
    out = tmp_path / "probe.json"
    code, stdout, _ = run_cli(
        capsys,
        "train-probe",
        "--manifest",
        str(path),
        "--provider",
        "pixelstats:8",
        "--out",
        str(out),
    )
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["d"] == 8
    assert len(doc["w1"]) == 256


def test_run_and_report_round_trip(tmp_path, capsys):
    path, _ = build_dataset(
        tmp_path, n_train_pos=8, n_train_neg=8, n_test=6, separable=True
    )
    configs = []
    for method in ("knn", "mlp_probe"):
        config = {
            "dataset_kind": "eelgrass",
            "method": method,
            "manifest_path": str(path),
            "output_dir": str(tmp_path / f"run-{method}"),
            "labeled_fraction": 1.0,
            "test_n": 6,
            "seed": 0,
            "embedding_provider": "pixelstats:8",
        }
        config_path = tmp_path / f"{method}.json"
        config_path.write_text(json.dumps(config))
        configs.append(config_path)
        code, out, _ = run_cli(capsys, "run", "--config", str(config_path))
        assert code == 0
        assert "effective config (run)" in out
        assert (tmp_path / f"run-{method}" / "metrics.json").exists()

    code, out, _ = run_cli(
        capsys,
        "report",
        "--in",
        str(tmp_path / "run-knn"),
        str(tmp_path / "run-mlp_probe"),
        "--out",
        str(tmp_path / "report"),
    )
    assert code == 0
    lines = (tmp_path / "report" / "report.csv").read_text().splitlines()
    assert len(lines) == 3  # header + one row per artifact dir
    assert lines[1].startswith("eelgrass,1.0,knn")


def test_run_reproducible_from_echoed_config(tmp_path, capsys):
    path, _ = build_dataset(tmp_path, n_train_pos=6, n_train_neg=6, n_test=4, separable=True)
    config = {
        "dataset_kind": "eelgrass",
        "method": "mlp_probe",
        "manifest_path": str(path),
        "output_dir": str(tmp_path / "first"),
        "test_n": 4,
        "seed": 5,
        "embedding_provider": "pixelstats:8",
    }
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps(config))
    code, out, _ = run_cli(capsys, "run", "--config", str(config_path))
    assert code == 0

    # rerun from the echoed effective config, into a second directory
    echoed = json.loads(out.split("effective config (run):\n", 1)[1].rsplit("metrics written", 1)[0])
    echoed["output_dir"] = str(tmp_path / "second")
    config2 = tmp_path / "config2.json"
    config2.write_text(json.dumps(echoed))
    code, _, _ = run_cli(capsys, "run", "--config", str(config2))
    assert code == 0
    first = (tmp_path / "first" / "metrics.json").read_bytes()
    second = (tmp_path / "second" / "metrics.json").read_bytes()
    assert first == second


def test_scripted_llm_run_and_tool_usage(tmp_path, capsys):
    path, _ = build_dataset(tmp_path, n_train_pos=4, n_train_neg=4, n_test=4, separable=True)
    script = [
        "TOOL: SharpenTool",
        "TOOL: PredictEelgrassWastingDiseaseTool",
        "ANSWER: positive CONFIDENCE: 0.9",
    ]
    script_path = tmp_path / "script.json"
    script_path.write_text(json.dumps(script))
    config = {
        "dataset_kind": "eelgrass",
        "method": "lmm_full",
        "manifest_path": str(path),
        "output_dir": str(tmp_path / "agent-run"),
        "test_n": 4,
        "seed": 0,
        "llm_backend": f"scripted:{script_path}",
        "embedding_provider": "pixelstats:8",
    }
    config_path = tmp_path / "agent.json"
    config_path.write_text(json.dumps(config))
    code, _, _ = run_cli(capsys, "run", "--config", str(config_path))
    assert code == 0

    code, _, _ = run_cli(
        capsys,
        "tool-usage",
        "--in",
        str(tmp_path / "agent-run"),
        "--out",
        str(tmp_path / "usage.csv"),
    )
    assert code == 0
    rows = {
        line.split(",")[0]: line.split(",")
        for line in (tmp_path / "usage.csv").read_text().splitlines()[1:]
    }
    # 4 conversations, each calling both tools exactly once
    assert rows["SharpenTool"][1] == "4"
    assert rows["PredictEelgrassWastingDiseaseTool"][1] == "4"
    assert rows["AdjustBrightnessTool"][1] == "0"
    assert rows["AdjustBrightnessTool"][2] == ""


def test_report_rejects_non_artifact_dir(tmp_path, capsys):
    code, _, err = run_cli(
        capsys, "report", "--in", str(tmp_path), "--out", str(tmp_path / "r")
    )
    assert code == 2
    assert "artifact" in err


def test_unknown_provider_spec_exits_2(tmp_path, capsys):
    path, _ = build_dataset(tmp_path)
    code, _, err = run_cli(
        capsys,
        "embed",
        "--manifest",
        str(path),
        "--provider",
        "telepathy",
        "--out",
        str(tmp_path / "c.jsonl"),
    )
    assert code == 2
    assert "telepathy" in err
