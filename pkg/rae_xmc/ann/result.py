"""Search results shared by the exact and approximate searchers."""

from dataclasses import dataclass
from typing import Protocol

import numpy as np

from ..core.matrices import EmbeddingMatrix
from ..core.predictions import rank_desc


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Retrieved keys ranked by descending inner product, ties by key id."""

    key_ids: np.ndarray
    scores: np.ndarray

    def __len__(self) -> int:
        return int(self.key_ids.size)

    @classmethod
    def ranked(cls, key_ids, scores, b: int) -> "SearchResult":
        ids, vals = rank_desc(key_ids, scores, b)
        return cls(ids, vals)

    def pairs(self):
        return [(int(k), float(s)) for k, s in zip(self.key_ids, self.scores)]


class KeySearcher(Protocol):
    """Anything that retrieves top-b keys for a unit query."""

    def search(
        self, keys: EmbeddingMatrix, q: np.ndarray, b: int, ef_search: int
    ) -> SearchResult: ...
