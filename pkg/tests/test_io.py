"""Tests for on-disk formats, manifests and synthetic fixtures."""

import os
import shutil
import struct
import tempfile
from pathlib import Path

import numpy as np
import pytest
from scipy import sparse

from rae_xmc.ann.hnsw import HnswIndex, build_index
from rae_xmc.core.matrices import EmbeddingMatrix, LabelMatrix
from rae_xmc.core.predictions import PredictionSet, RankedLabels
from rae_xmc.io.formats import (
    atomic_write,
    read_embeddings,
    read_encoder,
    read_features,
    read_index,
    read_labels,
    read_loss_curve,
    read_predictions,
    sha256_of,
    write_embeddings,
    write_encoder,
    write_features,
    write_index,
    write_labels,
    write_loss_curve,
    write_predictions,
)
from rae_xmc.io.manifest import load_artifacts, read_manifest, write_manifest
from rae_xmc.io.synthetic import (
    FIXTURE_FILES,
    make_synthetic_fixture,
    read_fixture_segments,
    recommended_segments,
)
from rae_xmc.trainer.encoder import ToyEncoder
from rae_xmc.utils.exceptions import (
    ChecksumMismatch,
    FormatError,
    InvalidConfig,
    InvariantViolation,
    ZeroRow,
)

from .helpers import random_labels, random_units


def _raw_embedding_file(path: Path, rows) -> None:
    rows = np.asarray(rows, dtype="<f4")
    header = struct.pack("<4sIQQ", b"RAEE", 1, rows.shape[0], rows.shape[1])
    path.write_bytes(header + rows.tobytes())


def _write_memory(out: Path, seed: int = 0):
    """Fixture files plus an index and manifest in ``out``."""
    fixture = make_synthetic_fixture(
        seed=seed, n_head_labels=2, n_tail_labels=5, out_dir=out
    )
    keys = EmbeddingMatrix.vstack([fixture.keys_x, fixture.keys_z])
    index = build_index(keys, m=4, ef_construction=20, seed=seed)
    write_index(out / "memory.hnsw", index)
    write_manifest(
        out / "manifest.json",
        out / "memory.hnsw",
        out / FIXTURE_FILES["keys_x"],
        out / FIXTURE_FILES["keys_z"],
        out / FIXTURE_FILES["y_train"],
        index,
        fixture.keys_x.rows,
        fixture.keys_z.rows,
        fixture.keys_x.dim,
    )
    return fixture, index


class TestEmbeddingFiles:
    """Test cases for embedding files."""

    def test_round_trip_is_bit_exact(self):
        """Unit rows come back unchanged."""
        keys = random_units(0, 25, 6)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            write_embeddings(path, keys)
            loaded = read_embeddings(path)
        assert np.array_equal(loaded.data, keys.data)

    def test_off_norm_rows_are_renormalized(self):
        """Rows far from unit norm are fixed; unit rows are kept."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            _raw_embedding_file(path, [[3.0, 4.0], [0.6, 0.8]])
            loaded = read_embeddings(path)
        np.testing.assert_allclose(loaded.data[0], [0.6, 0.8], rtol=1e-6)
        assert np.array_equal(loaded.data[1], np.array([0.6, 0.8], dtype=np.float32))

    def test_zero_row(self):
        """A zero row cannot be normalized."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            _raw_embedding_file(path, [[1.0, 0.0], [0.0, 0.0]])
            with pytest.raises(ZeroRow):
                read_embeddings(path)

    @pytest.mark.parametrize(
        "payload",
        [[[np.nan, np.inf]], [[0.6, 0.8], [np.nan, 1.0]], [[-np.inf, 0.0]]],
    )
    def test_non_finite_payload(self, payload):
        """Corrupt NaN or inf payloads are a format error."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            _raw_embedding_file(path, payload)
            with pytest.raises(FormatError):
                read_embeddings(path)

    def test_bad_magic(self):
        """Foreign files are rejected."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            path.write_bytes(struct.pack("<4sIQQ", b"NOPE", 1, 1, 2) + b"\0" * 8)
            with pytest.raises(FormatError):
                read_embeddings(path)

    def test_truncated_payload(self):
        """Missing bytes are detected."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            write_embeddings(path, random_units(1, 4, 3))
            path.write_bytes(path.read_bytes()[:-2])
            with pytest.raises(FormatError):
                read_embeddings(path)

    def test_truncated_header(self):
        """A few stray bytes are not an embedding file."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "keys.emb"
            path.write_bytes(b"RAE")
            with pytest.raises(FormatError):
                read_embeddings(path)


class TestLabelFiles:
    """Test cases for label files."""

    def test_round_trip_with_empty_rows(self):
        """Empty lines stand for instances without labels."""
        labels = LabelMatrix.from_rows([[0, 3], [], [1]], 4)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "y.txt"
            write_labels(path, labels)
            assert path.read_text() == "3 4\n0,3\n\n1\n"
            assert read_labels(path) == labels

    def test_random_round_trip(self):
        """Written labels read back equal."""
        labels = random_labels(4, 30, 9)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "y.txt"
            write_labels(path, labels)
            assert read_labels(path) == labels

    @pytest.mark.parametrize(
        "content",
        [
            "two 3\n0\n",
            "3 3\n0\n",
            "1 3\n2,1\n",
            "1 3\n0,3\n",
            "1 3\n0,x\n",
            "1 3\n1,1\n",
            "1 3\n-1\n",
        ],
    )
    def test_malformed_files(self, content):
        """Bad headers, counts, order, range and tokens are format errors."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "y.txt"
            path.write_text(content)
            with pytest.raises(FormatError):
                read_labels(path)

    def test_missing_file(self):
        """An unreadable path is a format error."""
        with pytest.raises(FormatError):
            read_labels("/nonexistent/y.txt")


class TestIndexFiles:
    """Test cases for serialized graphs."""

    def test_round_trip(self):
        """A built graph survives serialization."""
        index = build_index(random_units(3, 60, 4), m=4, ef_construction=20, seed=1)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "g.hnsw"
            write_index(path, index)
            loaded = read_index(path, ef_construction=20, seed=1)
        assert loaded == index
        assert loaded.ef_construction == 20

    def test_truncated_graph(self):
        """Cutting the adjacency data short is detected."""
        index = build_index(random_units(3, 30, 4), m=4, ef_construction=20, seed=1)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "g.hnsw"
            write_index(path, index)
            path.write_bytes(path.read_bytes()[:-8])
            with pytest.raises(FormatError):
                read_index(path)

    def test_dangling_link_is_invariant_violation(self):
        """A decodable graph with a link past the last node is rejected."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "g.hnsw"
            write_index(path, HnswIndex([[[1]], [[5]]], m=2, entry_point=0))
            with pytest.raises(InvariantViolation):
                read_index(path)


class TestOtherArtifacts:
    """Test cases for predictions, checkpoints, curves and features."""

    def test_prediction_round_trip(self):
        """Ids survive exactly and scores to six significant digits."""
        preds = PredictionSet(
            [
                RankedLabels(np.array([2, 0]), np.array([0.7312345678, 0.25])),
                RankedLabels(np.array([], dtype=np.int64), np.array([])),
            ],
            3,
        )
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "pred.tsv"
            write_predictions(path, preds)
            loaded = read_predictions(path, 3)
        assert len(loaded) == 2
        assert loaded[0].label_ids.tolist() == [2, 0]
        np.testing.assert_allclose(loaded[0].scores, [0.731235, 0.25])
        assert len(loaded[1]) == 0

    def test_prediction_query_ids_must_be_sequential(self):
        """Query ids run from zero without gaps."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "pred.tsv"
            path.write_text("0\t1:0.5\n2\t0:0.4\n")
            with pytest.raises(FormatError):
                read_predictions(path, 3)

    def test_prediction_scores_must_not_increase(self):
        """An out-of-order ranking is a format error."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "pred.tsv"
            path.write_text("0\t1:0.2,0:0.4\n")
            with pytest.raises(FormatError):
                read_predictions(path, 3)

    def test_encoder_round_trip(self):
        """Checkpoint weights are stored as float32."""
        encoder = ToyEncoder.initialize(7, 3, np.random.default_rng(0))
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "enc.bin"
            write_encoder(path, encoder)
            loaded = read_encoder(path)
        np.testing.assert_allclose(loaded.weights, encoder.weights, rtol=1e-6)

    def test_loss_curve_round_trip(self):
        """Curves are written as step, loss, lr rows."""
        curve = [(0, 1.5, 0.001), (1, 1.25, 0.002)]
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "curve.csv"
            write_loss_curve(path, curve)
            assert read_loss_curve(path) == curve

    def test_features_round_trip(self):
        """Sparse features are stored as npz."""
        features = sparse.random(10, 20, density=0.2, format="csr", random_state=0)
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "f.npz"
            write_features(path, features)
            loaded = read_features(path)
        assert (loaded != features).nnz == 0

    def test_atomic_write_leaves_nothing_on_failure(self):
        """A failed write neither creates the target nor leaves temp files."""
        with tempfile.TemporaryDirectory() as temp_dir:
            target = Path(temp_dir) / "out.txt"
            with pytest.raises(RuntimeError):
                with atomic_write(target, "w") as handle:
                    handle.write("partial")
                    raise RuntimeError("boom")
            assert os.listdir(temp_dir) == []


class TestManifest:
    """Test cases for knowledge-memory manifests."""

    def test_load_artifacts(self):
        """A freshly written manifest loads every artifact."""
        with tempfile.TemporaryDirectory() as temp_dir:
            out = Path(temp_dir)
            fixture, index = _write_memory(out)
            artifacts = load_artifacts(out / "manifest.json")
        assert artifacts.index == index
        assert artifacts.labels == fixture.y_train
        assert np.array_equal(artifacts.keys_z.data, fixture.keys_z.data)

    def test_paths_are_relative(self):
        """A memory directory can be moved as a whole."""
        with tempfile.TemporaryDirectory() as temp_dir:
            out = Path(temp_dir) / "a"
            _write_memory(out)
            moved = Path(temp_dir) / "b"
            shutil.move(str(out), str(moved))
            manifest = read_manifest(moved / "manifest.json")
            assert manifest["keys_x"]["path"] == FIXTURE_FILES["keys_x"]
            load_artifacts(moved / "manifest.json")

    def test_checksum_mismatch(self):
        """Any edited artifact is refused."""
        with tempfile.TemporaryDirectory() as temp_dir:
            out = Path(temp_dir)
            _write_memory(out)
            labels = out / FIXTURE_FILES["y_train"]
            labels.write_text(labels.read_text() + "\n")
            with pytest.raises(ChecksumMismatch):
                load_artifacts(out / "manifest.json")

    def test_incomplete_manifest(self):
        """Missing fields are format errors."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = Path(temp_dir) / "manifest.json"
            path.write_text('{"format_version": 1}')
            with pytest.raises(FormatError):
                read_manifest(path)


class TestSyntheticFixture:
    """Test cases for the synthetic memory fixture."""

    def test_same_seed_same_bytes(self):
        """Fixture files are byte-identical for a fixed seed."""
        with tempfile.TemporaryDirectory() as temp_dir:
            first, second = Path(temp_dir) / "1", Path(temp_dir) / "2"
            make_synthetic_fixture(seed=5, out_dir=first)
            make_synthetic_fixture(seed=5, out_dir=second)
            for name in FIXTURE_FILES.values():
                assert sha256_of(first / name) == sha256_of(second / name)

    def test_different_seed_different_keys(self):
        """The seed drives every draw."""
        a = make_synthetic_fixture(seed=1)
        b = make_synthetic_fixture(seed=2)
        assert not np.array_equal(a.keys_x.data, b.keys_x.data)

    def test_label_populations(self, synthetic_fixture):
        """Head labels own many instances and tail labels one or two."""
        freq = synthetic_fixture.y_train.label_frequencies()
        assert all(freq[l] == 30 for l in synthetic_fixture.head_labels)
        assert all(1 <= freq[l] <= 2 for l in synthetic_fixture.tail_labels)
        fx = synthetic_fixture
        assert fx.queries.rows == fx.y_test.n_rows == 5 * 4 + 40

    def test_segments_are_recorded(self):
        """Thresholds are written next to the data."""
        with tempfile.TemporaryDirectory() as temp_dir:
            make_synthetic_fixture(seed=0, instances_per_head=12, out_dir=temp_dir)
            segments, meta = read_fixture_segments(temp_dir)
        assert segments == recommended_segments(12)
        assert meta["params"]["instances_per_head"] == 12

    def test_too_few_head_instances(self):
        """Head labels need enough instances to dominate retrieval."""
        with pytest.raises(InvalidConfig):
            make_synthetic_fixture(instances_per_head=3)
