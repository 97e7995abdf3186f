"""Shared builders for random memories and queries."""

import numpy as np

from rae_xmc.core.matrices import EmbeddingMatrix, LabelMatrix, normalize_rows
from rae_xmc.core.memory import KnowledgeMemory, build_knowledge_memory


def random_units(seed: int, n: int, d: int) -> EmbeddingMatrix:
    return normalize_rows(np.random.default_rng(seed).normal(size=(n, d)))


def random_labels(
    seed: int, n: int, n_labels: int, max_per_row: int = 3
) -> LabelMatrix:
    rng = np.random.default_rng(seed)
    rows = []
    for _ in range(n):
        size = int(rng.integers(1, max_per_row + 1))
        rows.append(sorted(rng.choice(n_labels, size=size, replace=False).tolist()))
    return LabelMatrix.from_rows(rows, n_labels)


def random_memory(
    seed: int,
    n: int = 40,
    n_labels: int = 12,
    d: int = 8,
    lam: float = 0.5,
    tau: float = 0.04,
) -> KnowledgeMemory:
    return build_knowledge_memory(
        random_units(seed, n, d),
        random_units(seed + 1000, n_labels, d),
        random_labels(seed + 2000, n, n_labels),
        lam,
        tau,
    )


def hand_placed_memory(lam: float = 0.5, tau: float = 0.04) -> KnowledgeMemory:
    """N=3 instances and L=3 labels in the plane."""
    angles_x = np.array([0.0, 0.5, 2.0])
    angles_z = np.array([0.1, 1.2, 2.8])
    x = normalize_rows(np.stack([np.cos(angles_x), np.sin(angles_x)], axis=1))
    z = normalize_rows(np.stack([np.cos(angles_z), np.sin(angles_z)], axis=1))
    y = LabelMatrix.from_rows([[0], [0, 1], [2]], 3)
    return build_knowledge_memory(x, z, y, lam, tau)
