"""
Synthetic datasets for desk-scale experiments.

``make_synthetic_fixture`` produces embeddings where frequent labels are
best served by memorized training instances and rare labels by their label
embeddings. ``make_separable_dataset`` produces sparse bag-of-token data the
toy encoder can fit.
"""

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy import sparse

from ..core.config_types import SegmentSpec
from ..core.matrices import EmbeddingMatrix, LabelMatrix, normalize_rows
from ..trainer.loop import TrainingDataset
from ..utils.exceptions import InvalidConfig
from .formats import (
    PathLike,
    atomic_write,
    read_features,
    read_labels,
    write_embeddings,
    write_features,
    write_labels,
)

logger = logging.getLogger(__name__)

FIXTURE_FILES = {
    "keys_x": "x_train.emb",
    "keys_z": "z_labels.emb",
    "y_train": "y_train.txt",
    "queries": "x_test.emb",
    "y_test": "y_test.txt",
    "meta": "fixture.json",
}


@dataclass
class FixtureParams:
    seed: int = 0
    n_head_labels: int = 5
    n_tail_labels: int = 40
    instances_per_head: int = 30
    d: int = 32
    queries_per_head: int = 4
    noise: float = 0.03
    # Weight of the true direction in misleading embeddings.
    signal: float = 0.1


@dataclass
class SyntheticFixture:
    keys_x: EmbeddingMatrix
    keys_z: EmbeddingMatrix
    y_train: LabelMatrix
    queries: EmbeddingMatrix
    y_test: LabelMatrix
    params: FixtureParams
    segments: SegmentSpec = field(default_factory=SegmentSpec)

    @property
    def head_labels(self) -> List[int]:
        return list(range(self.params.n_head_labels))

    @property
    def tail_labels(self) -> List[int]:
        n_head = self.params.n_head_labels
        return list(range(n_head, n_head + self.params.n_tail_labels))


def recommended_segments(instances_per_head: int) -> SegmentSpec:
    """Thresholds putting head labels in Head and 1-2 instance labels in xTail."""
    return SegmentSpec(head_above=instances_per_head - 1, torso_above=3, tail_above=2)


def _unit(rng: np.random.Generator, d: int) -> np.ndarray:
    v = rng.normal(size=d)
    return v / np.linalg.norm(v)


def _blend(rng: np.random.Generator, center: np.ndarray, weight: float) -> np.ndarray:
    """A vector only weakly aligned with ``center``."""
    return weight * center + _unit(rng, center.size)


def make_synthetic_fixture(
    seed: int = 0,
    n_head_labels: int = 5,
    n_tail_labels: int = 40,
    instances_per_head: int = 30,
    d: int = 32,
    out_dir: Optional[PathLike] = None,
    queries_per_head: int = 4,
) -> SyntheticFixture:
    """
    Build (and optionally write) the memorization/generalization fixture.

    Head labels own many near-duplicate training instances around their
    cluster center, but their label embeddings point mostly elsewhere. Tail
    labels own one or two instances that point mostly elsewhere, but their
    label embedding is the cluster center itself. Every test query sits next
    to the center of its single label.
    """
    if instances_per_head < 5:
        raise InvalidConfig("instances_per_head must be at least 5")
    if n_head_labels < 1 or n_tail_labels < 1 or d < 2:
        raise InvalidConfig("need at least one head label, one tail label and d >= 2")
    params = FixtureParams(
        seed=seed,
        n_head_labels=n_head_labels,
        n_tail_labels=n_tail_labels,
        instances_per_head=instances_per_head,
        d=d,
        queries_per_head=queries_per_head,
    )
    rng = np.random.default_rng(seed)
    n_labels = n_head_labels + n_tail_labels
    centers = np.stack([_unit(rng, d) for _ in range(n_labels)])

    x_rows: List[np.ndarray] = []
    y_rows: List[List[int]] = []
    z_rows: List[np.ndarray] = []
    q_rows: List[np.ndarray] = []
    t_rows: List[List[int]] = []

    def near(center: np.ndarray) -> np.ndarray:
        return center + rng.normal(scale=params.noise, size=d)

    for label in range(n_labels):
        center = centers[label]
        if label < n_head_labels:
            z_rows.append(_blend(rng, center, params.signal))
            for _ in range(instances_per_head):
                x_rows.append(near(center))
                y_rows.append([label])
            n_queries = queries_per_head
        else:
            z_rows.append(center)
            for _ in range(int(rng.integers(1, 3))):
                x_rows.append(_blend(rng, center, params.signal))
                y_rows.append([label])
            n_queries = 1
        for _ in range(n_queries):
            q_rows.append(near(center))
            t_rows.append([label])

    fixture = SyntheticFixture(
        keys_x=normalize_rows(np.stack(x_rows)),
        keys_z=normalize_rows(np.stack(z_rows)),
        y_train=LabelMatrix.from_rows(y_rows, n_labels),
        queries=normalize_rows(np.stack(q_rows)),
        y_test=LabelMatrix.from_rows(t_rows, n_labels),
        params=params,
        segments=recommended_segments(instances_per_head),
    )
    logger.info(
        f"Synthetic fixture: N={fixture.keys_x.rows}, L={n_labels}, "
        f"queries={fixture.queries.rows}, d={d}"
    )
    if out_dir is not None:
        write_fixture(out_dir, fixture)
    return fixture


def fixture_paths(out_dir: PathLike) -> Dict[str, Path]:
    return {key: Path(out_dir) / name for key, name in FIXTURE_FILES.items()}


def write_fixture(out_dir: PathLike, fixture: SyntheticFixture) -> Dict[str, Path]:
    Path(out_dir).mkdir(parents=True, exist_ok=True)
    paths = fixture_paths(out_dir)
    write_embeddings(paths["keys_x"], fixture.keys_x)
    write_embeddings(paths["keys_z"], fixture.keys_z)
    write_labels(paths["y_train"], fixture.y_train)
    write_embeddings(paths["queries"], fixture.queries)
    write_labels(paths["y_test"], fixture.y_test)
    meta = {
        "params": asdict(fixture.params),
        "segments": list(fixture.segments.thresholds),
        "head_labels": fixture.head_labels,
        "tail_labels": fixture.tail_labels,
    }
    with atomic_write(paths["meta"], "w") as handle:
        json.dump(meta, handle, indent=2, sort_keys=True)
    return paths


# ----------------------------------------------------------------------
# Sparse toy training data
# ----------------------------------------------------------------------

TRAINING_FILES = {
    "features": "features.npz",
    "label_features": "label_features.npz",
    "labels": "labels.txt",
}


def make_separable_dataset(
    n_instances: int = 500,
    n_labels: int = 50,
    tokens_per_label: int = 3,
    noise_vocab: int = 100,
    noise_tokens: int = 2,
    seed: int = 0,
    out_dir: Optional[PathLike] = None,
) -> TrainingDataset:
    """
    Bag-of-token data with one label per instance.

    Each label owns ``tokens_per_label`` private tokens; its label text is
    all of them. An instance of that label carries all but one of the
    private tokens plus ``noise_tokens`` tokens from a shared noise vocabulary.
    """
    if tokens_per_label < 2:
        raise InvalidConfig("tokens_per_label must be at least 2")
    rng = np.random.default_rng(seed)
    n_features = n_labels * tokens_per_label + noise_vocab

    label_rows, label_cols = [], []
    for label in range(n_labels):
        for t in range(tokens_per_label):
            label_rows.append(label)
            label_cols.append(label * tokens_per_label + t)
    label_features = sparse.csr_matrix(
        (np.ones(len(label_rows)), (label_rows, label_cols)),
        shape=(n_labels, n_features),
    )

    assignments = rng.permutation(np.arange(n_instances) % n_labels)
    rows, cols = [], []
    for i, label in enumerate(assignments):
        own = rng.choice(tokens_per_label, size=tokens_per_label - 1, replace=False)
        picked = [int(label) * tokens_per_label + int(t) for t in own]
        if noise_vocab and noise_tokens:
            size = min(noise_tokens, noise_vocab)
            noise = rng.choice(noise_vocab, size=size, replace=False)
            picked.extend(n_labels * tokens_per_label + int(t) for t in noise)
        rows.extend([i] * len(picked))
        cols.extend(picked)
    features = sparse.csr_matrix(
        (np.ones(len(rows)), (rows, cols)), shape=(n_instances, n_features)
    )
    labels = LabelMatrix.from_rows([[int(l)] for l in assignments], n_labels)

    dataset = TrainingDataset(features, label_features, labels)
    if out_dir is not None:
        write_training_dataset(out_dir, dataset)
    return dataset


def write_training_dataset(
    out_dir: PathLike, dataset: TrainingDataset
) -> Dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {key: out / name for key, name in TRAINING_FILES.items()}
    write_features(paths["features"], dataset.features)
    write_features(paths["label_features"], dataset.label_features)
    write_labels(paths["labels"], dataset.labels)
    return paths


def read_training_dataset(
    features: PathLike, label_features: PathLike, labels: PathLike
) -> TrainingDataset:
    return TrainingDataset(
        read_features(features), read_features(label_features), read_labels(labels)
    )


def read_fixture_segments(out_dir: PathLike) -> Tuple[SegmentSpec, dict]:
    with open(fixture_paths(out_dir)["meta"], encoding="utf-8") as handle:
        meta = json.load(handle)
    return SegmentSpec.from_thresholds(meta["segments"]), meta
