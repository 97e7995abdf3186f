"""Knowledge-memory manifest: what an index was built from, with checksums."""

import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, Optional

from ..ann.hnsw import HnswIndex
from ..core.matrices import EmbeddingMatrix, LabelMatrix
from ..utils.exceptions import ChecksumMismatch, DimensionMismatch, FormatError
from .formats import (
    FORMAT_VERSION,
    PathLike,
    atomic_write,
    read_embeddings,
    read_index,
    read_labels,
    sha256_of,
)

logger = logging.getLogger(__name__)

REQUIRED_KEYS = (
    "format_version",
    "n_instances",
    "n_labels",
    "dim",
    "index",
    "keys_x",
    "keys_z",
    "labels",
)
MEMORY_FILES = ("keys_x", "keys_z", "labels")


def _relative(path: Path, base: Path) -> str:
    try:
        return os.path.relpath(path.resolve(), base.resolve())
    except ValueError:
        # Different drives on Windows.
        return str(path.resolve())


def _file_entry(path: Path, base: Path) -> Dict[str, str]:
    return {"path": _relative(path, base), "sha256": sha256_of(path)}


@dataclass
class Artifacts:
    """Everything a predictor needs, loaded and cross-checked."""

    keys_x: EmbeddingMatrix
    keys_z: EmbeddingMatrix
    labels: LabelMatrix
    index: HnswIndex
    manifest: Dict[str, Any]


def write_manifest(
    path: PathLike,
    index_path: PathLike,
    keys_x_path: PathLike,
    keys_z_path: PathLike,
    labels_path: PathLike,
    index: HnswIndex,
    n_instances: int,
    n_labels: int,
    dim: int,
) -> Dict[str, Any]:
    path = Path(path)
    base = path.parent
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_instances": n_instances,
        "n_labels": n_labels,
        "dim": dim,
        "index": {
            **_file_entry(Path(index_path), base),
            "m": index.m,
            "ef_construction": index.ef_construction,
            "seed": index.seed,
        },
        "keys_x": _file_entry(Path(keys_x_path), base),
        "keys_z": _file_entry(Path(keys_z_path), base),
        "labels": _file_entry(Path(labels_path), base),
    }
    with atomic_write(path, "w") as handle:
        json.dump(manifest, handle, indent=2)
    logger.info(f"Wrote manifest {path}")
    return manifest


def read_manifest(path: PathLike) -> Dict[str, Any]:
    try:
        with open(path, encoding="utf-8") as handle:
            manifest = json.load(handle)
    except (OSError, json.JSONDecodeError) as e:
        raise FormatError(f"Cannot read manifest {path}: {e}") from e
    for key in REQUIRED_KEYS:
        if key not in manifest:
            raise FormatError(f"Manifest {path} is missing '{key}'")
    if manifest["format_version"] != FORMAT_VERSION:
        raise FormatError(f"Unsupported manifest version {manifest['format_version']}")
    return manifest


def resolve(manifest_path: PathLike, entry: Dict[str, Any]) -> Path:
    candidate = Path(entry["path"])
    if candidate.is_absolute():
        return candidate
    return Path(manifest_path).parent / candidate


def verify_file(path: PathLike, entry: Dict[str, Any]) -> None:
    """
    Raises:
        ChecksumMismatch: If the file content differs from the recorded digest
    """
    actual = sha256_of(path)
    if actual != entry["sha256"]:
        raise ChecksumMismatch(
            f"{path} does not match the manifest (sha256 {actual[:12]}..., "
            f"expected {entry['sha256'][:12]}...)"
        )


def load_artifacts(
    manifest_path: PathLike, index_path: Optional[PathLike] = None
) -> Artifacts:
    """
    Load the memory files named by a manifest after verifying every checksum.

    ``index_path`` overrides the manifest's index location; the override
    must still carry the recorded checksum.
    """
    manifest = read_manifest(manifest_path)
    paths = {key: resolve(manifest_path, manifest[key]) for key in MEMORY_FILES}
    if index_path:
        paths["index"] = Path(index_path)
    else:
        paths["index"] = resolve(manifest_path, manifest["index"])
    for key, path in paths.items():
        verify_file(path, manifest[key])

    keys_x = read_embeddings(paths["keys_x"])
    keys_z = read_embeddings(paths["keys_z"])
    labels = read_labels(paths["labels"])
    index = read_index(
        paths["index"],
        ef_construction=manifest["index"].get("ef_construction", 0),
        seed=manifest["index"].get("seed"),
    )
    if (keys_x.rows, keys_z.rows, keys_x.dim) != (
        manifest["n_instances"],
        manifest["n_labels"],
        manifest["dim"],
    ):
        raise DimensionMismatch("embedding files disagree with the manifest shape")
    if index.node_count != keys_x.rows + keys_z.rows:
        raise DimensionMismatch(
            f"index has {index.node_count} nodes, "
            f"memory has {keys_x.rows + keys_z.rows} keys"
        )
    logger.info(f"Loaded memory: N={keys_x.rows}, L={keys_z.rows}, d={keys_x.dim}")
    return Artifacts(keys_x, keys_z, labels, index, manifest)
