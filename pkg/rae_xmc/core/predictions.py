"""Ranked per-query label lists."""

from dataclasses import dataclass
from typing import Iterator, List, Sequence, Tuple

import numpy as np
from scipy import sparse

from ..utils.exceptions import InvariantViolation


def rank_desc(
    ids: np.ndarray, scores: np.ndarray, k: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Top-k (ids, scores) by descending score, ties by ascending id."""
    ids = np.asarray(ids, dtype=np.int64)
    scores = np.asarray(scores, dtype=np.float64)
    order = np.lexsort((ids, -scores))[:k]
    return ids[order], scores[order]


@dataclass(frozen=True, eq=False)
class RankedLabels:
    """One query's truncated ranking: label ids with non-increasing scores."""

    label_ids: np.ndarray
    scores: np.ndarray

    def __post_init__(self):
        if self.label_ids.shape != self.scores.shape:
            raise InvariantViolation("label_ids and scores must have equal length")
        if np.any(np.diff(self.scores) > 0):
            raise InvariantViolation("scores must be non-increasing")
        if np.unique(self.label_ids).size != self.label_ids.size:
            raise InvariantViolation("label ids must be unique within a ranking")

    def __len__(self) -> int:
        return int(self.label_ids.size)

    def top(self, k: int) -> np.ndarray:
        return self.label_ids[:k]

    def as_dict(self) -> dict:
        return {int(l): float(s) for l, s in zip(self.label_ids, self.scores)}


class PredictionSet(Sequence):
    """Per-query rankings in query order."""

    def __init__(self, rows: Sequence[RankedLabels], n_labels: int):
        self._rows: List[RankedLabels] = list(rows)
        self.n_labels = n_labels
        for row in self._rows:
            if row.label_ids.size and (
                row.label_ids.min() < 0 or row.label_ids.max() >= n_labels
            ):
                raise InvariantViolation(f"label id outside [0, {n_labels})")

    def __getitem__(self, i):
        return self._rows[i]

    def __len__(self) -> int:
        return len(self._rows)

    def __iter__(self) -> Iterator[RankedLabels]:
        return iter(self._rows)

    @classmethod
    def from_sparse_scores(
        cls, scores: sparse.csr_matrix, topk: int
    ) -> "PredictionSet":
        """Truncate each row of a (queries x L) score matrix to its top-k labels."""
        scores = sparse.csr_matrix(scores)
        rows = []
        for i in range(scores.shape[0]):
            start, stop = scores.indptr[i], scores.indptr[i + 1]
            ids, vals = rank_desc(
                scores.indices[start:stop], scores.data[start:stop], topk
            )
            rows.append(RankedLabels(ids, vals))
        return cls(rows, n_labels=scores.shape[1])

    @classmethod
    def from_dense_scores(cls, scores: np.ndarray, topk: int) -> "PredictionSet":
        rows = []
        all_ids = np.arange(scores.shape[1])
        for row in np.asarray(scores, dtype=np.float64):
            keep = row > 0
            ids, vals = rank_desc(all_ids[keep], row[keep], topk)
            rows.append(RankedLabels(ids, vals))
        return cls(rows, n_labels=scores.shape[1])
