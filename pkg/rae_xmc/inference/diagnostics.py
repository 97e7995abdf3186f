"""Retrieval diagnostics: the source mix of retrieved keys and inference latency."""

import logging
import time
from dataclasses import dataclass
from typing import Dict, Sequence, Tuple

import numpy as np

from ..ann.result import KeySearcher, SearchResult
from ..core.config_types import InferenceConfig
from ..core.matrices import EmbeddingMatrix
from ..core.memory import KnowledgeMemory
from ..core.predictions import PredictionSet
from ..utils.exceptions import EmptyResults
from .predictor import key_probabilities

logger = logging.getLogger(__name__)


def retrieval_source_mix(
    memory: KnowledgeMemory, results: Sequence[SearchResult]
) -> Tuple[float, float]:
    """
    Average share of retrieved keys that are instances vs labels.

    Per query, ids below N count as instance keys and the rest as label keys;
    the two fractions are averaged over queries with a non-empty result.

    Raises:
        EmptyResults: If no query retrieved anything
    """
    fractions = [
        float(np.count_nonzero(r.key_ids < memory.n_instances)) / len(r)
        for r in results
        if len(r)
    ]
    if not fractions:
        raise EmptyResults("no retrieved keys to summarize")
    instance_fraction = float(np.mean(fractions))
    return instance_fraction, 1.0 - instance_fraction


@dataclass(frozen=True)
class LatencyReport:
    """Per-query wall times in seconds, query embedding excluded."""

    search: np.ndarray
    aggregation: np.ndarray

    @property
    def total(self) -> np.ndarray:
        return self.search + self.aggregation

    @staticmethod
    def _summary(samples: np.ndarray) -> Dict[str, float]:
        return {
            "mean": float(np.mean(samples)),
            "p50": float(np.percentile(samples, 50)),
            "p99": float(np.percentile(samples, 99)),
        }

    def summary(self) -> Dict[str, Dict[str, float]]:
        return {
            "search": self._summary(self.search),
            "aggregation": self._summary(self.aggregation),
            "total": self._summary(self.total),
            "n_queries": int(self.search.size),
        }


def latency_probe(
    memory: KnowledgeMemory,
    index: KeySearcher,
    queries: EmbeddingMatrix,
    cfg: InferenceConfig,
) -> LatencyReport:
    """Time search and sparse aggregation separately for each query."""
    search_times = np.empty(queries.rows)
    agg_times = np.empty(queries.rows)
    n_keys = memory.keys.rows
    for i in range(queries.rows):
        start = time.perf_counter()
        result = index.search(memory.keys, queries.row(i), cfg.b, cfg.ef_search)
        searched = time.perf_counter()
        probs = key_probabilities([result], n_keys, cfg.tau)
        scores = memory.aggregate(probs, cfg.lam)
        PredictionSet.from_sparse_scores(scores, cfg.topk)
        done = time.perf_counter()
        search_times[i] = searched - start
        agg_times[i] = done - searched
    report = LatencyReport(search=search_times, aggregation=agg_times)
    logger.info(f"Latency over {queries.rows} queries: {report.summary()['total']}")
    return report
