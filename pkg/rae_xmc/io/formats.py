"""
Binary and text file formats.

All binary layouts are little-endian with a 4-byte magic and a u32 format
version. Writers go through :func:`atomic_write` so a reader never observes
a half-written file.
"""

import csv
import hashlib
import logging
import os
import struct
import tempfile
from contextlib import contextmanager
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy import sparse

from ..ann.hnsw import HnswIndex
from ..core.matrices import NORM_TOLERANCE, EmbeddingMatrix, LabelMatrix, normalize_rows
from ..core.predictions import PredictionSet, RankedLabels
from ..trainer.encoder import ToyEncoder
from ..utils.exceptions import FormatError, InvariantViolation

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

FORMAT_VERSION = 1
EMBEDDING_MAGIC = b"RAEE"
INDEX_MAGIC = b"RAEI"
ENCODER_MAGIC = b"RAEW"

_EMBEDDING_HEADER = struct.Struct("<4sIQQ")
_INDEX_HEADER = struct.Struct("<4sIQIQ")
_ENCODER_HEADER = struct.Struct("<4sIQQ")


@contextmanager
def atomic_write(path: PathLike, mode: str = "wb"):
    """Write to a temp file next to ``path`` and rename it into place on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(
        dir=path.parent, prefix=f".{path.name}.", suffix=".tmp"
    )
    tmp_path = Path(tmp_name)
    try:
        kwargs = {} if "b" in mode else {"encoding": "utf-8", "newline": ""}
        with os.fdopen(fd, mode, **kwargs) as handle:
            yield handle
        os.replace(tmp_path, path)
    finally:
        if tmp_path.exists():
            try:
                tmp_path.unlink()
            except OSError:
                logger.exception(f"Failed to cleanup temp file {tmp_path}")


def sha256_of(path: PathLike) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_bytes(path: PathLike) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise FormatError(f"Cannot read {path}: {e}") from e


def _check_header(path, magic: bytes, found: bytes, version: int) -> None:
    if found != magic:
        raise FormatError(f"{path}: bad magic {found!r}, expected {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported format version {version}")


# ----------------------------------------------------------------------
# Embedding files
# ----------------------------------------------------------------------


def write_embeddings(path: PathLike, matrix: EmbeddingMatrix) -> None:
    with atomic_write(path) as handle:
        handle.write(
            _EMBEDDING_HEADER.pack(
                EMBEDDING_MAGIC, FORMAT_VERSION, matrix.rows, matrix.dim
            )
        )
        handle.write(np.ascontiguousarray(matrix.data, dtype="<f4").tobytes())


def read_embeddings(path: PathLike) -> EmbeddingMatrix:
    """
    Load an embedding file.

    Rows whose norm is off by more than the tolerance are re-normalized;
    rows already on the unit sphere are kept bit-exact.

    Raises:
        FormatError: On a bad header or a payload of the wrong length
            or non-finite entries
        ZeroRow: If a stored row is zero
    """
    blob = _read_bytes(path)
    if len(blob) < _EMBEDDING_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, rows, dim = _EMBEDDING_HEADER.unpack_from(blob)
    _check_header(path, EMBEDDING_MAGIC, magic, version)
    expected = rows * dim * 4
    payload = blob[_EMBEDDING_HEADER.size :]
    if len(payload) != expected:
        raise FormatError(
            f"{path}: payload has {len(payload)} bytes, expected {expected}"
        )

    data = np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(rows, dim)
    if not np.isfinite(data).all():
        raise FormatError(f"{path}: payload holds NaN or inf entries")
    norms = np.linalg.norm(data.astype(np.float64), axis=1)
    off = ~(np.abs(norms - 1.0) <= NORM_TOLERANCE)
    if np.any(off):
        logger.warning(f"{path}: re-normalizing {int(off.sum())} rows")
        data[off] = normalize_rows(data[off]).data
    return EmbeddingMatrix(data)


# ----------------------------------------------------------------------
# Label files
# ----------------------------------------------------------------------


def write_labels(path: PathLike, labels: LabelMatrix) -> None:
    with atomic_write(path, "w") as handle:
        handle.write(f"{labels.n_rows} {labels.n_labels}\n")
        for row in labels.rows():
            handle.write(",".join(str(int(l)) for l in row) + "\n")


def read_labels(path: PathLike) -> LabelMatrix:
    """
    Parse a label file: a ``N L`` header then N comma-separated id lines.

    Raises:
        FormatError: On a malformed header, non-integer ids, ids out of range,
            non-ascending lines or a wrong line count
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").split("\n")
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"Cannot read {path}: {e}") from e
    try:
        n_rows, n_labels = (int(tok) for tok in lines[0].split())
    except ValueError as e:
        raise FormatError(f"{path}: header must be 'N L', got {lines[0]!r}") from e

    body = lines[1:]
    # A trailing newline leaves one empty element after the last row.
    if len(body) == n_rows + 1 and body[-1] == "":
        body = body[:-1]
    if len(body) != n_rows:
        raise FormatError(f"{path}: header declares {n_rows} rows, found {len(body)}")

    rows = []
    for lineno, line in enumerate(body, start=2):
        line = line.strip()
        try:
            row = [int(tok) for tok in line.split(",")] if line else []
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: non-integer label id") from e
        if any(b <= a for a, b in zip(row, row[1:])):
            raise FormatError(f"{path}:{lineno}: label ids must be strictly ascending")
        if row and (row[0] < 0 or row[-1] >= n_labels):
            raise FormatError(f"{path}:{lineno}: label id outside [0, {n_labels})")
        rows.append(row)
    return LabelMatrix.from_rows(rows, n_labels)


# ----------------------------------------------------------------------
# HNSW index files
# ----------------------------------------------------------------------


def write_index(path: PathLike, index: HnswIndex) -> None:
    with atomic_write(path) as handle:
        handle.write(
            _INDEX_HEADER.pack(
                INDEX_MAGIC,
                FORMAT_VERSION,
                index.node_count,
                index.m,
                index.entry_point,
            )
        )
        for node_links in index.links:
            parts = [len(node_links)]
            for adjacency in node_links:
                parts.append(len(adjacency))
                parts.extend(adjacency)
            handle.write(np.asarray(parts, dtype="<u8").tobytes())


def read_index(path: PathLike, ef_construction: int = 0, seed=None) -> HnswIndex:
    """
    Load and validate a serialized HNSW graph.

    Raises:
        FormatError: On a bad header or truncated body
        InvariantViolation: If the decoded graph breaks a structural invariant
    """
    blob = _read_bytes(path)
    if len(blob) < _INDEX_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, node_count, m, entry_point = _INDEX_HEADER.unpack_from(blob)
    _check_header(path, INDEX_MAGIC, magic, version)
    body = blob[_INDEX_HEADER.size :]
    if len(body) % 8:
        raise FormatError(f"{path}: body is not a whole number of u64 words")
    words = np.frombuffer(body, dtype="<u8")

    cursor = 0

    def take(count: int) -> np.ndarray:
        nonlocal cursor
        if cursor + count > words.size:
            raise FormatError(f"{path}: truncated adjacency data")
        chunk = words[cursor : cursor + count]
        cursor += count
        return chunk

    links: List[List[List[int]]] = []
    for _ in range(node_count):
        n_levels = int(take(1)[0])
        node_links = []
        for _ in range(n_levels):
            degree = int(take(1)[0])
            node_links.append([int(v) for v in take(degree)])
        links.append(node_links)
    if cursor != words.size:
        raise FormatError(
            f"{path}: {words.size - cursor} trailing words after the graph"
        )

    index = HnswIndex(
        links,
        m=m,
        entry_point=entry_point,
        ef_construction=ef_construction,
        seed=seed,
    )
    index.validate()
    return index


# ----------------------------------------------------------------------
# Predictions
# ----------------------------------------------------------------------


def write_predictions(path: PathLike, predictions: PredictionSet) -> None:
    with atomic_write(path, "w") as handle:
        for qid, ranked in enumerate(predictions):
            pairs = ",".join(
                f"{int(l)}:{s:.6g}" for l, s in zip(ranked.label_ids, ranked.scores)
            )
            handle.write(f"{qid}\t{pairs}\n")


def read_predictions(path: PathLike, n_labels: int) -> PredictionSet:
    """Parse ``query_id<TAB>label:score,...`` lines; query ids must run 0..Q-1."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except (OSError, UnicodeDecodeError) as e:
        raise FormatError(f"Cannot read {path}: {e}") from e

    rows = []
    for lineno, line in enumerate(lines, start=1):
        qid_text, _, body = line.partition("\t")
        try:
            qid = int(qid_text)
            pairs = [tuple(item.split(":")) for item in body.split(",")] if body else []
            ids = np.array([int(l) for l, _ in pairs], dtype=np.int64)
            scores = np.array([float(s) for _, s in pairs], dtype=np.float64)
        except ValueError as e:
            raise FormatError(f"{path}:{lineno}: malformed prediction line") from e
        if qid != len(rows):
            raise FormatError(
                f"{path}:{lineno}: expected query id {len(rows)}, got {qid}"
            )
        if ids.size and (ids.min() < 0 or ids.max() >= n_labels):
            raise FormatError(f"{path}:{lineno}: label id outside [0, {n_labels})")
        try:
            rows.append(RankedLabels(ids, scores))
        except InvariantViolation as e:
            raise FormatError(f"{path}:{lineno}: {e}") from e
    return PredictionSet(rows, n_labels)


# ----------------------------------------------------------------------
# Trainer artifacts
# ----------------------------------------------------------------------


def write_encoder(path: PathLike, encoder: ToyEncoder) -> None:
    with atomic_write(path) as handle:
        handle.write(
            _ENCODER_HEADER.pack(
                ENCODER_MAGIC, FORMAT_VERSION, encoder.d_in, encoder.dim
            )
        )
        handle.write(np.ascontiguousarray(encoder.weights, dtype="<f4").tobytes())


def read_encoder(path: PathLike) -> ToyEncoder:
    blob = _read_bytes(path)
    if len(blob) < _ENCODER_HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, d_in, dim = _ENCODER_HEADER.unpack_from(blob)
    _check_header(path, ENCODER_MAGIC, magic, version)
    payload = blob[_ENCODER_HEADER.size :]
    if len(payload) != d_in * dim * 4:
        raise FormatError(f"{path}: weight payload has {len(payload)} bytes")
    weights = np.frombuffer(payload, dtype="<f4").reshape(d_in, dim)
    return ToyEncoder(weights.astype(np.float64))


def write_loss_curve(path: PathLike, curve: Iterable[Sequence]) -> None:
    with atomic_write(path, "w") as handle:
        writer = csv.writer(handle)
        writer.writerow(["step", "loss", "lr"])
        for step, loss, lr in curve:
            writer.writerow([step, repr(float(loss)), repr(float(lr))])


def read_loss_curve(path: PathLike) -> List[Tuple[int, float, float]]:
    with open(path, newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        return [(int(r["step"]), float(r["loss"]), float(r["lr"])) for r in reader]


def write_features(path: PathLike, features) -> None:
    """Store a sparse feature matrix as ``.npz``."""
    with atomic_write(path) as handle:
        sparse.save_npz(handle, sparse.csr_matrix(features))


def read_features(path: PathLike) -> sparse.csr_matrix:
    try:
        return sparse.csr_matrix(sparse.load_npz(path))
    except (OSError, ValueError, KeyError) as e:
        raise FormatError(f"Cannot read features from {path}: {e}") from e
