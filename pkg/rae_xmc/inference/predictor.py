"""
Retrieval-augmented prediction over a knowledge memory.

For each query: retrieve the top-b keys, softmax their similarities with
temperature tau (renormalized over the retrieved keys only), then push the
key probabilities through the lambda-weighted value rows.
"""

import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Sequence

import numpy as np
from scipy import sparse
from scipy.special import softmax

from ..ann.result import KeySearcher, SearchResult
from ..core.config_types import InferenceConfig, check_lambda, check_tau
from ..core.matrices import EmbeddingMatrix, softmax_over_scores
from ..core.memory import KnowledgeMemory
from ..core.predictions import PredictionSet
from ..utils.exceptions import BeyondQueue, DimensionMismatch

logger = logging.getLogger(__name__)

EXACT_ADVISORY_LIMIT = 100_000


def _check_queries(memory: KnowledgeMemory, queries: EmbeddingMatrix) -> None:
    if queries.dim != memory.dim:
        raise DimensionMismatch(f"query dim {queries.dim} != memory dim {memory.dim}")


def retrieve_all(
    searcher: KeySearcher,
    keys: EmbeddingMatrix,
    queries: EmbeddingMatrix,
    b: int,
    ef_search: int,
    num_threads: int = 1,
) -> List[SearchResult]:
    """Search every query; outputs are in query order whatever the thread count."""

    def one(i: int) -> SearchResult:
        return searcher.search(keys, queries.row(i), b, ef_search)

    if num_threads > 1:
        with ThreadPoolExecutor(max_workers=num_threads) as pool:
            return list(pool.map(one, range(queries.rows)))
    return [one(i) for i in range(queries.rows)]


def key_probabilities(
    results: Sequence[SearchResult], n_keys: int, tau: float
) -> sparse.csr_matrix:
    """Restricted softmax over each query's retrieved keys as a (queries x keys) CSR."""
    indptr = [0]
    indices = []
    data = []
    for result in results:
        if len(result):
            indices.append(result.key_ids)
            data.append(softmax_over_scores(result.scores, tau))
        indptr.append(indptr[-1] + len(result))
    if indices:
        indices = np.concatenate(indices)
        data = np.concatenate(data)
    else:
        indices = np.empty(0, dtype=np.int64)
        data = np.empty(0, dtype=np.float64)
    return sparse.csr_matrix(
        (data, indices, np.asarray(indptr)), shape=(len(results), n_keys)
    )


class Predictor:
    """
    Two-stage predictor bound to a memory and a searcher over its keys.

    Retrieval does not depend on lambda, so :meth:`retrieve` can run once and
    :meth:`aggregate` many times (lambda sweeps).
    """

    def __init__(
        self, memory: KnowledgeMemory, searcher: KeySearcher, num_threads: int = 1
    ):
        self.memory = memory
        self.searcher = searcher
        self.num_threads = num_threads

    def retrieve(
        self, queries: EmbeddingMatrix, b: int, ef_search: int
    ) -> List[SearchResult]:
        _check_queries(self.memory, queries)
        if b > ef_search:
            raise BeyondQueue(f"ef_search ({ef_search}) must be >= b ({b})")
        logger.info(f"Retrieving top-{b} keys for {queries.rows} queries")
        return retrieve_all(
            self.searcher, self.memory.keys, queries, b, ef_search, self.num_threads
        )

    def aggregate(
        self, results: Sequence[SearchResult], tau: float, lam: float, topk: int
    ) -> PredictionSet:
        probs = key_probabilities(results, self.memory.keys.rows, tau)
        scores = self.memory.aggregate(probs, lam)
        return PredictionSet.from_sparse_scores(scores, topk)

    def predict(self, queries: EmbeddingMatrix, cfg: InferenceConfig) -> PredictionSet:
        results = self.retrieve(queries, cfg.b, cfg.ef_search)
        return self.aggregate(results, cfg.tau, cfg.lam, cfg.topk)


def predict(
    memory: KnowledgeMemory,
    index: KeySearcher,
    queries: EmbeddingMatrix,
    cfg: InferenceConfig,
) -> PredictionSet:
    """Top-b retrieval, restricted softmax and lambda-weighted aggregation."""
    return Predictor(memory, index).predict(queries, cfg)


def dense_scores_exact(
    memory: KnowledgeMemory, queries: EmbeddingMatrix, tau: float, lam: float
) -> np.ndarray:
    """Full (queries x L) score matrix Softmax(Q K^T / tau) V."""
    check_tau(tau)
    check_lambda(lam)
    _check_queries(memory, queries)
    if memory.keys.rows > EXACT_ADVISORY_LIMIT:
        logger.warning(
            f"Exact inference over {memory.keys.rows} keys; "
            "this is meant for small memories"
        )
    sims = queries.as_float64() @ memory.keys.as_float64().T
    probs = softmax(sims / tau, axis=1)
    n = memory.n_instances
    instance_part = (memory.train_labels.csr.T @ probs[:, :n].T).T
    return lam * np.asarray(instance_part) + (1.0 - lam) * probs[:, n:]


def predict_exact(
    memory: KnowledgeMemory,
    queries: EmbeddingMatrix,
    tau: float,
    lam: float,
    topk: int,
) -> PredictionSet:
    """Exact inference over all N+L keys, no top-b truncation."""
    scores = dense_scores_exact(memory, queries, tau, lam)
    return PredictionSet.from_dense_scores(scores, topk)


def predict_ova_knn(
    memory: KnowledgeMemory,
    instance_index: KeySearcher,
    label_index: KeySearcher,
    queries: EmbeddingMatrix,
    cfg: InferenceConfig,
) -> PredictionSet:
    """
    Convex combination of a kNN vote and a label-retrieval softmax.

    Scores are lam * Softmax(q X^T / tau) Y + (1 - lam) * Softmax(q Z^T / tau),
    each softmax restricted to its own top-b retrieval and normalized on its own.
    """
    _check_queries(memory, queries)
    x_keys = memory.instance_keys()
    z_keys = memory.label_keys()
    x_results = retrieve_all(instance_index, x_keys, queries, cfg.b, cfg.ef_search)
    z_results = retrieve_all(label_index, z_keys, queries, cfg.b, cfg.ef_search)
    p_x = key_probabilities(x_results, x_keys.rows, cfg.tau)
    p_z = key_probabilities(z_results, z_keys.rows, cfg.tau)
    scores = sparse.csr_matrix(
        cfg.lam * (p_x @ memory.train_labels.csr) + (1.0 - cfg.lam) * p_z
    )
    scores.eliminate_zeros()
    return PredictionSet.from_sparse_scores(scores, cfg.topk)
