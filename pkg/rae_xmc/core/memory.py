"""The knowledge memory: joint instance + label keys with implicit values."""

import logging
from dataclasses import dataclass, replace
from typing import Optional

from scipy import sparse

from ..utils.exceptions import DimensionMismatch
from .config_types import check_lambda, check_tau
from .matrices import EmbeddingMatrix, LabelMatrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class KnowledgeMemory:
    """
    Keys K = [X; Z] with values V = [lam * Y; (1 - lam) * I].

    Key ids 0..N-1 are training instances, N..N+L-1 are labels. V is never
    materialized: lam is applied when scores are aggregated, so a memory can
    be re-weighted with :meth:`with_lambda` without touching the keys or any
    index built over them.
    """

    keys: EmbeddingMatrix
    train_labels: LabelMatrix
    lam: float
    tau: float

    def __post_init__(self):
        check_lambda(self.lam)
        check_tau(self.tau)
        expected = self.train_labels.n_rows + self.train_labels.n_labels
        if self.keys.rows != expected:
            raise DimensionMismatch(
                f"memory has {self.keys.rows} keys, expected N + L = {expected}"
            )

    @property
    def n_instances(self) -> int:
        return self.train_labels.n_rows

    @property
    def n_labels(self) -> int:
        return self.train_labels.n_labels

    @property
    def dim(self) -> int:
        return self.keys.dim

    def is_instance_key(self, key_id: int) -> bool:
        return 0 <= key_id < self.n_instances

    def instance_keys(self) -> EmbeddingMatrix:
        return self.keys.slice(0, self.n_instances)

    def label_keys(self) -> EmbeddingMatrix:
        return self.keys.slice(self.n_instances, self.keys.rows)

    def value(self, key_id: int, label: int) -> float:
        """Entry V[key_id, label] under the current lambda."""
        if self.is_instance_key(key_id):
            return self.lam * float(label in self.train_labels.row(key_id))
        return (1.0 - self.lam) * float(key_id - self.n_instances == label)

    def aggregate(
        self, key_probs: sparse.csr_matrix, lam: Optional[float] = None
    ) -> sparse.csr_matrix:
        """
        Multiply key probabilities (queries x (N+L)) by the implicit value matrix.

        Computes lam * P[:, :N] @ Y + (1 - lam) * P[:, N:] without stacking V.
        Entries that are exactly zero are dropped.
        """
        lam = self.lam if lam is None else lam
        check_lambda(lam)
        if key_probs.shape[1] != self.keys.rows:
            raise DimensionMismatch(
                f"probabilities cover {key_probs.shape[1]} keys, "
                f"memory has {self.keys.rows}"
            )
        key_probs = sparse.csr_matrix(key_probs)
        n = self.n_instances
        instance_part = key_probs[:, :n] @ self.train_labels.csr
        scores = lam * instance_part + (1.0 - lam) * key_probs[:, n:]
        scores = sparse.csr_matrix(scores)
        scores.eliminate_zeros()
        scores.sort_indices()
        return scores

    def with_lambda(self, lam: float) -> "KnowledgeMemory":
        return replace(self, lam=lam)


def build_knowledge_memory(
    x_emb: EmbeddingMatrix,
    z_emb: EmbeddingMatrix,
    y: LabelMatrix,
    lam: float,
    tau: float,
) -> KnowledgeMemory:
    """
    Stack instance and label embeddings into the key matrix.

    Raises:
        DimensionMismatch: If row counts or dims disagree with Y
        InvalidLambda: If lam is outside [0, 1]
        InvalidTau: If tau <= 0
    """
    if x_emb.rows != y.n_rows:
        raise DimensionMismatch(
            f"{x_emb.rows} instance embeddings but Y has {y.n_rows} rows"
        )
    if z_emb.rows != y.n_labels:
        raise DimensionMismatch(
            f"{z_emb.rows} label embeddings but Y has {y.n_labels} labels"
        )
    if x_emb.dim != z_emb.dim:
        raise DimensionMismatch(
            f"instance dim {x_emb.dim} differs from label dim {z_emb.dim}"
        )
    memory = KnowledgeMemory(
        keys=EmbeddingMatrix.vstack([x_emb, z_emb]),
        train_labels=y,
        lam=lam,
        tau=tau,
    )
    logger.info(
        f"Built knowledge memory: N={memory.n_instances}, L={memory.n_labels}, "
        f"d={memory.dim}, lambda={lam:.3g}, tau={tau:.3g}"
    )
    return memory
