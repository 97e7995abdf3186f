"""Exact maximum-inner-product search over all keys."""

import numpy as np

from ..core.matrices import EmbeddingMatrix
from ..utils.exceptions import DimensionMismatch
from .result import SearchResult


def _query_vector(keys: EmbeddingMatrix, q) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64).ravel()
    if q.size != keys.dim:
        raise DimensionMismatch(f"query dim {q.size} != key dim {keys.dim}")
    return q


def brute_force_search(keys: EmbeddingMatrix, q, b: int) -> SearchResult:
    """
    Exact top-b keys by inner product with q, ties broken by lower key id.

    Raises:
        DimensionMismatch: If q does not match the key dimension
    """
    q = _query_vector(keys, q)
    scores = keys.data @ q
    b = min(b, scores.size)
    if b < scores.size:
        # Everything tied with the b-th best score has to survive the cut so
        # that the id tie-break stays exact.
        kth = np.partition(scores, scores.size - b)[scores.size - b]
        candidates = np.flatnonzero(scores >= kth)
    else:
        candidates = np.arange(scores.size)
    return SearchResult.ranked(candidates, scores[candidates], b)


class BruteForceIndex:
    """Searcher adapter with the same interface as :class:`HnswIndex`."""

    def search(
        self, keys: EmbeddingMatrix, q, b: int, ef_search: int = 0
    ) -> SearchResult:
        return brute_force_search(keys, q, b)
