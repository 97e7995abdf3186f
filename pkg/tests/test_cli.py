"""Tests for CLI interface."""

import json
import tempfile
from pathlib import Path
from unittest.mock import patch

import pytest
from click.testing import CliRunner

from rae_xmc.cli import main
from rae_xmc.core.config_loader import ConfigLoader, load_configuration, merge_configs
from rae_xmc.core.config_types import LossKind
from rae_xmc.io.formats import (
    read_embeddings,
    read_loss_curve,
    read_predictions,
    write_embeddings,
)
from rae_xmc.utils.exceptions import InvalidConfig

from .helpers import random_units


def _invoke(*args: str):
    result = CliRunner().invoke(main, [str(a) for a in args])
    return result


def _build_memory(out: Path, seed: int = 0) -> None:
    result = _invoke(
        "make-fixture", "--out-dir", out, "--n-head", 2, "--n-tail", 5,
        "--instances-per-head", 10, "--dim", 8, "--seed", seed,
    )
    assert result.exit_code == 0, result.output
    result = _invoke(
        "build-index",
        "--keys-x", out / "x_train.emb",
        "--keys-z", out / "z_labels.emb",
        "--labels", out / "y_train.txt",
        "--out", out / "memory.hnsw",
        "--m", 4,
        "--efc", 20,
        "--seed", seed,
    )
    assert result.exit_code == 0, result.output


@pytest.fixture
def memory_dir():
    """A small fixture with a built index and manifest."""
    with tempfile.TemporaryDirectory() as temp_dir:
        out = Path(temp_dir)
        _build_memory(out)
        yield out


def _inference_args(out: Path):
    return [
        "--manifest", out / "memory.json",
        "--queries", out / "x_test.emb",
        "--b", 10,
        "--efs", 20,
        "--topk", 5,
    ]


class TestCLI:
    """Test cases for CLI interface."""

    def test_cli_help(self):
        """Test CLI help output."""
        result = _invoke("--help")
        assert result.exit_code == 0
        assert "RAE-XMC" in result.output
        commands = ("build-index", "predict", "evaluate", "sweep-lambda", "train-toy")
        for command in commands:
            assert command in result.output

    def test_build_index_writes_manifest(self, memory_dir):
        """The manifest defaults to the index path with a .json suffix."""
        manifest = json.loads((memory_dir / "memory.json").read_text())
        assert manifest["index"]["m"] == 4
        assert manifest["index"]["path"] == "memory.hnsw"

    def test_predict_and_evaluate(self, memory_dir):
        """Predictions feed the evaluator and its JSON report."""
        pred = memory_dir / "pred.tsv"
        result = _invoke("predict", *_inference_args(memory_dir), "--out", pred)
        assert result.exit_code == 0, result.output
        assert len(read_predictions(pred, 7)) == 2 * 4 + 5

        metrics = memory_dir / "metrics.json"
        result = _invoke(
            "evaluate",
            "--pred", pred,
            "--truth", memory_dir / "y_test.txt",
            "--train-labels", memory_dir / "y_train.txt",
            "--ks", "1,5",
            "--segments", "9,3,2",
            "--compare", pred,
            "--out", metrics,
        )
        assert result.exit_code == 0, result.output
        assert "RAE-XMC EVALUATION" in result.output
        data = json.loads(metrics.read_text())
        assert 0.0 <= data["P@1"] <= 1.0
        assert data["comparison"]["metrics"]["P@1"]["p"] == 1.0

    def test_same_seed_pipelines_are_byte_identical(self):
        """make-fixture, build-index and predict reproduce every byte for one seed."""
        with tempfile.TemporaryDirectory() as temp_dir:
            runs = [Path(temp_dir) / "first", Path(temp_dir) / "second"]
            for out in runs:
                _build_memory(out, seed=3)
                pred = out / "pred.tsv"
                result = _invoke("predict", *_inference_args(out), "--out", pred)
                assert result.exit_code == 0, result.output
            a, b = runs
            for name in ("x_train.emb", "z_labels.emb", "memory.hnsw", "pred.tsv"):
                assert (a / name).read_bytes() == (b / name).read_bytes(), name
            manifests = [json.loads((out / "memory.json").read_text()) for out in runs]
            assert manifests[0]["index"]["sha256"] == manifests[1]["index"]["sha256"]

    def test_ova_knn_mode(self, memory_dir):
        """The separate-index baseline writes the same file layout."""
        pred = memory_dir / "ova.tsv"
        result = _invoke(
            "predict", *_inference_args(memory_dir), "--mode", "ova-knn", "--out", pred
        )
        assert result.exit_code == 0, result.output
        assert len(read_predictions(pred, 7)) == 13

    def test_sweeps(self, memory_dir):
        """Lambda and depth sweeps write one row per setting."""
        lambdas = memory_dir / "lambdas.json"
        result = _invoke(
            "sweep-lambda", *_inference_args(memory_dir),
            "--truth", memory_dir / "y_test.txt",
            "--lambdas", "0,0.5,1",
            "--ks", "1",
            "--segments", "9,3,2",
            "--out", lambdas,
            "--report", memory_dir / "lambdas.md",
        )
        assert result.exit_code == 0, result.output
        rows = json.loads(lambdas.read_text())
        assert [row["lambda"] for row in rows] == [0.0, 0.5, 1.0]
        markdown = (memory_dir / "lambdas.md").read_text()
        assert markdown.startswith("# RAE-XMC Lambda Sweep")
        assert "| lambda |" in markdown
        assert markdown.count("\n| 0.") + markdown.count("\n| 1.") == 3

        depths = memory_dir / "depths.json"
        result = _invoke(
            "sweep-b", *_inference_args(memory_dir),
            "--truth", memory_dir / "y_test.txt",
            "--bs", "1,4,8",
            "--ks", "1",
            "--out", depths,
        )
        assert result.exit_code == 0, result.output
        rows = json.loads(depths.read_text())
        assert [row["b"] for row in rows] == [1, 4, 8]
        assert all(
            abs(row["instance_fraction"] + row["label_fraction"] - 1.0) < 1e-9
            for row in rows
        )

    def test_latency(self, memory_dir):
        """Latency prints per-stage summaries."""
        result = _invoke("latency", *_inference_args(memory_dir))
        assert result.exit_code == 0, result.output
        assert "LATENCY" in result.output

    def test_low_lambda_preset(self, memory_dir):
        """Presets from the configuration are accepted."""
        pred = memory_dir / "low.tsv"
        result = _invoke(
            "predict",
            *_inference_args(memory_dir),
            "--preset",
            "low_lambda",
            "--out",
            pred,
        )
        assert result.exit_code == 0, result.output

    def test_train_toy_and_encode(self):
        """Training writes a checkpoint and curve that encode can use."""
        with tempfile.TemporaryDirectory() as temp_dir:
            out = Path(temp_dir)
            result = _invoke(
                "make-fixture", "--out-dir", out, "--kind", "separable",
                "--n-instances", 60, "--n-labels", 10,
            )
            assert result.exit_code == 0, result.output
            result = _invoke(
                "train-toy",
                "--features", out / "features.npz",
                "--label-features", out / "label_features.npz",
                "--labels", out / "labels.txt",
                "--out", out / "encoder.bin",
                "--steps", 5,
                "--loss", "decoupled",
            )
            assert result.exit_code == 0, result.output
            assert "TOY TRAINING" in result.output
            assert len(read_loss_curve(out / "encoder.csv")) == 5

            result = _invoke(
                "encode",
                "--checkpoint", out / "encoder.bin",
                "--features", out / "features.npz",
                "--out", out / "x.emb",
            )
            assert result.exit_code == 0, result.output
            assert read_embeddings(out / "x.emb").rows == 60


class TestExitCodes:
    """Errors map to stable exit codes."""

    def test_format_error(self, memory_dir):
        """A malformed label file exits with 2."""
        pred = memory_dir / "pred.tsv"
        result = _invoke("predict", *_inference_args(memory_dir), "--out", pred)
        assert result.exit_code == 0
        bad = memory_dir / "bad.txt"
        bad.write_text("not a header\n")
        result = _invoke(
            "evaluate", "--pred", pred, "--truth", bad,
            "--train-labels", memory_dir / "y_train.txt",
        )
        assert result.exit_code == 2
        assert "FormatError" in result.output

    def test_checksum_mismatch(self, memory_dir):
        """Artifacts edited after indexing exit with 3."""
        labels = memory_dir / "y_train.txt"
        labels.write_text(labels.read_text() + "\n")
        pred = memory_dir / "p.tsv"
        result = _invoke("predict", *_inference_args(memory_dir), "--out", pred)
        assert result.exit_code == 3
        assert "ChecksumMismatch" in result.output

    def test_query_dimension_mismatch(self, memory_dir):
        """Queries of another dimension exit with 3."""
        queries = memory_dir / "wrong.emb"
        write_embeddings(queries, random_units(0, 3, 4))
        result = _invoke(
            "predict", "--manifest", memory_dir / "memory.json", "--queries", queries,
            "--b", 10, "--efs", 20, "--out", memory_dir / "p.tsv",
        )
        assert result.exit_code == 3

    def test_invalid_lambda(self, memory_dir):
        """lambda outside [0, 1] exits with 4."""
        result = _invoke(
            "predict",
            *_inference_args(memory_dir),
            "--lambda",
            1.5,
            "--out",
            memory_dir / "p.tsv",
        )
        assert result.exit_code == 4
        assert "InvalidLambda" in result.output

    def test_b_beyond_queue(self, memory_dir):
        """More keys than the search queue holds exits with 4."""
        result = _invoke(
            "predict", "--manifest", memory_dir / "memory.json",
            "--queries", memory_dir / "x_test.emb",
            "--b", 30, "--efs", 20, "--out", memory_dir / "p.tsv",
        )
        assert result.exit_code == 4

    def test_keyboard_interrupt(self):
        """Ctrl-C exits with 130."""
        with tempfile.TemporaryDirectory() as temp_dir:
            target = "rae_xmc.cli.make_synthetic_fixture"
            with patch(target, side_effect=KeyboardInterrupt):
                result = _invoke("make-fixture", "--out-dir", temp_dir)
        assert result.exit_code == 130
        assert "Interrupted" in result.output

    def test_unexpected_error(self):
        """Anything else exits with 1 and a one-line message."""
        with tempfile.TemporaryDirectory() as temp_dir:
            target = "rae_xmc.cli.make_synthetic_fixture"
            with patch(target, side_effect=RuntimeError("disk on fire")):
                result = _invoke("make-fixture", "--out-dir", temp_dir)
        assert result.exit_code == 1
        assert "Unexpected error: disk on fire" in result.output

    def test_broken_configuration_file(self):
        """An unreadable configuration exits with 4."""
        with tempfile.TemporaryDirectory() as temp_dir:
            config = Path(temp_dir) / "bad.yaml"
            config.write_text("inference: [1\n")
            out = Path(temp_dir) / "f"
            result = _invoke("--config", config, "make-fixture", "--out-dir", out)
        assert result.exit_code == 4


class TestConfiguration:
    """Test cases for configuration loading."""

    def test_merge_configs(self):
        """Test configuration merging."""
        default = {
            "inference": {"b": 200, "tau": 0.04},
            "sweep": {"lambdas": [0.0, 1.0]},
        }
        override = {"inference": {"b": 50}, "sweep": {"lambdas": [0.5]}}

        merged = merge_configs(default, override)

        assert merged["inference"] == {"b": 50, "tau": 0.04}
        assert merged["sweep"]["lambdas"] == [0.5]

    def test_load_configuration_with_defaults(self):
        """Test loading default configuration."""
        with tempfile.TemporaryDirectory() as tmpdir:
            config = load_configuration(None, Path(tmpdir))

            for section in ("index", "inference", "presets", "evaluation", "train"):
                assert section in config
            assert config["inference"]["lambda"] == 0.5
            assert config["presets"]["low_lambda"]["lambda"] == 0.01

    def test_project_configuration_is_picked_up(self):
        """A .rae-xmc.yaml in the search directory overrides defaults."""
        with tempfile.TemporaryDirectory() as tmpdir:
            (Path(tmpdir) / ".rae-xmc.yaml").write_text("inference:\n  b: 64\n")
            loader = ConfigLoader(None, Path(tmpdir))
            cfg = loader.inference_config()
        assert cfg.b == 64
        assert cfg.lam == 0.5

    def test_override_order(self):
        """Explicit values beat presets, which beat defaults."""
        with tempfile.TemporaryDirectory() as tmpdir:
            loader = ConfigLoader(None, Path(tmpdir))
        assert loader.inference_config("low_lambda").lam == 0.01
        assert loader.inference_config("low_lambda", lam=0.3).lam == 0.3
        assert loader.inference_config(b=None).b == 200

    def test_unknown_preset(self):
        """Unknown presets are configuration errors."""
        with tempfile.TemporaryDirectory() as tmpdir:
            loader = ConfigLoader(None, Path(tmpdir))
        with pytest.raises(InvalidConfig):
            loader.inference_config("nope")

    def test_train_config(self):
        """Loss names become LossKind values."""
        with tempfile.TemporaryDirectory() as tmpdir:
            config_file = Path(tmpdir) / "custom.yaml"
            config_file.write_text("train:\n  loss: softmax\n  max_steps: 10\n")
            loader = ConfigLoader(config_file, Path(tmpdir))
        cfg = loader.train_config()
        assert cfg.loss is LossKind.SOFTMAX
        assert cfg.max_steps == 10
        with pytest.raises(InvalidConfig):
            loader.train_config(loss="hinge")
