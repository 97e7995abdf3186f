"""
Hierarchical navigable small-world graph for inner-product search.

Keys are unit vectors, so the largest inner product is the smallest L2
distance; the graph is built and searched on similarities directly and every
reported score is a freshly computed inner product.
"""

import heapq
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Set, Tuple

import numpy as np

from ..core.matrices import EmbeddingMatrix
from ..utils.exceptions import (
    BeyondQueue,
    DimensionMismatch,
    EmptyKeySet,
    InvalidConfig,
    InvariantViolation,
)
from .brute_force import _query_vector, brute_force_search
from .result import SearchResult

logger = logging.getLogger(__name__)

# (similarity, node id) pairs throughout; larger similarity is better and
# ties prefer the lower id.
Scored = Tuple[float, int]


class HnswIndex:
    """
    Layered proximity graph over the rows of a key matrix.

    ``links[node][level]`` is the adjacency list of ``node`` at ``level``;
    ``len(links[node]) - 1`` is the node's assigned level. Layer 0 holds up
    to ``2 * m`` neighbours per node, upper layers up to ``m``.
    """

    def __init__(
        self,
        links: List[List[List[int]]],
        m: int,
        entry_point: int,
        ef_construction: int = 0,
        seed: Optional[int] = None,
    ):
        self._links = links
        self.m = m
        self.m0 = 2 * m
        self.entry_point = entry_point
        self.ef_construction = ef_construction
        self.seed = seed

    # ------------------------------------------------------------------
    # Properties
    # ------------------------------------------------------------------

    @property
    def node_count(self) -> int:
        return len(self._links)

    @property
    def max_level(self) -> int:
        return len(self._links[self.entry_point]) - 1

    def level_of(self, node: int) -> int:
        return len(self._links[node]) - 1

    def neighbors(self, node: int, level: int) -> List[int]:
        return list(self._links[node][level])

    @property
    def links(self) -> List[List[List[int]]]:
        return self._links

    def __eq__(self, other) -> bool:
        if not isinstance(other, HnswIndex):
            return NotImplemented
        return (
            self.m == other.m
            and self.entry_point == other.entry_point
            and self._links == other._links
        )

    def validate(self) -> None:
        """
        Check the structural invariants.

        Raises:
            InvariantViolation: On oversize lists, dangling ids, self-loops
                or an entry point below the top level
        """
        n = self.node_count
        if n == 0:
            raise EmptyKeySet("index has no nodes")
        if not 0 <= self.entry_point < n:
            raise InvariantViolation(f"entry point {self.entry_point} out of range")
        top = max(len(levels) for levels in self._links) - 1
        if self.max_level != top:
            raise InvariantViolation(
                f"entry point level {self.max_level} below the top level {top}"
            )
        for node, levels in enumerate(self._links):
            if not levels:
                raise InvariantViolation(f"node {node} has no level 0")
            for level, adj in enumerate(levels):
                cap = self.m0 if level == 0 else self.m
                if len(adj) > cap:
                    raise InvariantViolation(
                        f"node {node} has {len(adj)} links at level {level} (max {cap})"
                    )
                for other in adj:
                    if other == node:
                        raise InvariantViolation(f"self-loop at node {node}")
                    if not 0 <= other < n:
                        raise InvariantViolation(f"node {node} links to {other}")
                    if self.level_of(other) < level:
                        raise InvariantViolation(
                            f"node {node} links to {other} above its level"
                        )
                if len(set(adj)) != len(adj):
                    raise InvariantViolation(f"duplicate links at node {node}")

    # ------------------------------------------------------------------
    # Search
    # ------------------------------------------------------------------

    def search(self, keys: EmbeddingMatrix, q, b: int, ef_search: int) -> SearchResult:
        """
        Approximate top-b keys by inner product.

        Greedy descent from the entry point through the upper layers, then a
        beam of width ``ef_search`` on layer 0.

        Raises:
            DimensionMismatch: If q or keys do not match the index
            BeyondQueue: If b > ef_search
        """
        if b > ef_search:
            raise BeyondQueue(
                f"b ({b}) exceeds the search queue ef_search ({ef_search})"
            )
        if keys.rows != self.node_count:
            raise DimensionMismatch(
                f"index has {self.node_count} nodes but {keys.rows} keys were given"
            )
        if ef_search >= self.node_count:
            # The queue can hold every node: a full scan is exact and cheaper.
            return brute_force_search(keys, q, b)
        q = _query_vector(keys, q)
        data = keys.data
        ep = self.entry_point
        ep_sim = float(data[ep] @ q)
        for level in range(self.max_level, 0, -1):
            ep, ep_sim = self._greedy_closest(data, q, ep, ep_sim, level)
        found = self._search_layer(data, q, [(ep_sim, ep)], ef_search, 0)
        count = len(found)
        ids = np.fromiter((node for _, node in found), dtype=np.int64, count=count)
        sims = np.fromiter((sim for sim, _ in found), dtype=np.float64, count=count)
        return SearchResult.ranked(ids, sims, b)

    def _greedy_closest(
        self, data: np.ndarray, q: np.ndarray, ep: int, ep_sim: float, level: int
    ) -> Scored:
        while True:
            adj = self._links[ep][level]
            if not adj:
                return ep, ep_sim
            adj = list(adj)
            sims = data[adj] @ q
            best = int(np.argmax(sims))
            if sims[best] <= ep_sim:
                return ep, ep_sim
            ep, ep_sim = adj[best], float(sims[best])

    def _search_layer(
        self,
        data: np.ndarray,
        q: np.ndarray,
        entry_points: List[Scored],
        ef: int,
        level: int,
    ) -> List[Scored]:
        visited: Set[int] = {node for _, node in entry_points}
        candidates = [(-sim, node) for sim, node in entry_points]
        heapq.heapify(candidates)
        # Min-heap of (sim, -id): the root is the worst kept result.
        results = [(sim, -node) for sim, node in entry_points]
        heapq.heapify(results)
        while len(results) > ef:
            heapq.heappop(results)

        while candidates:
            neg_sim, current = heapq.heappop(candidates)
            if len(results) >= ef and -neg_sim < results[0][0]:
                break
            adj = [node for node in self._links[current][level] if node not in visited]
            if not adj:
                continue
            visited.update(adj)
            sims = (data[adj] @ q).tolist()
            for node, sim in zip(adj, sims):
                if len(results) < ef or (sim, -node) > results[0]:
                    heapq.heappush(candidates, (-sim, node))
                    heapq.heappush(results, (sim, -node))
                    if len(results) > ef:
                        heapq.heappop(results)
        return sorted(((sim, -neg_node) for sim, neg_node in results), key=_rank_key)

    # ------------------------------------------------------------------
    # Construction
    # ------------------------------------------------------------------

    @classmethod
    def build(
        cls,
        keys: EmbeddingMatrix,
        m: int = 64,
        ef_construction: int = 500,
        seed: int = 0,
        num_threads: int = 1,
        extend_candidates: bool = False,
    ) -> "HnswIndex":
        """
        Insert every key in id order.

        With ``num_threads == 1`` the result depends only on (keys, m,
        ef_construction, seed). More threads insert concurrently and the
        adjacency lists are no longer reproducible.

        Raises:
            EmptyKeySet: If keys has no rows
            InvalidConfig: If m < 2 or ef_construction < m
        """
        if keys.rows < 1:
            raise EmptyKeySet("cannot build an index over zero keys")
        if m < 2:
            raise InvalidConfig(f"m must be >= 2, got {m}")
        if ef_construction < m:
            raise InvalidConfig(
                f"ef_construction ({ef_construction}) must be >= m ({m})"
            )

        start = time.perf_counter()
        rng = np.random.default_rng(seed)
        level_mult = 1.0 / np.log(m)
        uniform = 1.0 - rng.random(keys.rows)  # in (0, 1]
        levels = np.floor(-np.log(uniform) * level_mult).astype(np.int64)

        links = [[[] for _ in range(int(lvl) + 1)] for lvl in levels]
        index = cls(
            links, m=m, entry_point=0, ef_construction=ef_construction, seed=seed
        )
        builder = _Builder(index, keys.data, ef_construction, extend_candidates)

        if num_threads == 1:
            for node in range(1, keys.rows):
                builder.insert(node)
        else:
            with ThreadPoolExecutor(max_workers=num_threads) as pool:
                list(pool.map(builder.insert, range(1, keys.rows)))

        logger.info(
            f"Built HNSW index: {keys.rows} nodes, M={m}, efC={ef_construction}, "
            f"top level {index.max_level} in {time.perf_counter() - start:.2f}s"
        )
        return index


def _rank_key(item: Scored):
    sim, node = item
    return (-sim, node)


class _Builder:
    """Insertion state for :meth:`HnswIndex.build`."""

    def __init__(
        self,
        index: HnswIndex,
        data: np.ndarray,
        ef_construction: int,
        extend_candidates: bool,
    ):
        self.index = index
        self.data = data
        self.ef = ef_construction
        self.extend_candidates = extend_candidates
        self.entry_lock = threading.Lock()
        self.node_locks = [threading.Lock() for _ in range(index.node_count)]

    def insert(self, node: int) -> None:
        index, data = self.index, self.data
        links = index.links
        level = len(links[node]) - 1
        q = data[node].astype(np.float64)

        with self.entry_lock:
            ep = index.entry_point
            top = index.max_level

        ep_sim = float(data[ep] @ q)
        for lev in range(top, level, -1):
            ep, ep_sim = index._greedy_closest(data, q, ep, ep_sim, lev)

        entry_points = [(ep_sim, ep)]
        for lev in range(min(level, top), -1, -1):
            found = index._search_layer(data, q, entry_points, self.ef, lev)
            found = [item for item in found if item[1] != node]
            if self.extend_candidates:
                found = self._extend(q, found, lev, node)
            chosen = self.select_neighbors(found, index.m)
            with self.node_locks[node]:
                links[node][lev] = [other for _, other in chosen]
            cap = index.m0 if lev == 0 else index.m
            for sim, other in chosen:
                self._link_back(other, node, sim, lev, cap)
            entry_points = found or entry_points

        if level > top:
            with self.entry_lock:
                if level > index.max_level:
                    index.entry_point = node

    def _link_back(self, node: int, new: int, sim: float, level: int, cap: int) -> None:
        with self.node_locks[node]:
            adj = self.index.links[node][level]
            if new in adj:
                return
            if len(adj) < cap:
                adj.append(new)
                return
            base = self.data[node].astype(np.float64)
            members = adj + [new]
            sims = (self.data[members] @ base).tolist()
            scored = sorted(zip(sims, members), key=_rank_key)
            self.index.links[node][level] = [
                other for _, other in self.select_neighbors(scored, cap)
            ]

    def _extend(
        self, q: np.ndarray, found: List[Scored], level: int, node: int
    ) -> List[Scored]:
        seen = {other for _, other in found}
        seen.add(node)
        extra = []
        for _, other in found:
            for nb in self.index.links[other][level]:
                if nb not in seen:
                    seen.add(nb)
                    extra.append(nb)
        if not extra:
            return found
        sims = (self.data[extra] @ q).tolist()
        return sorted(found + list(zip(sims, extra)), key=_rank_key)

    def select_neighbors(self, candidates: List[Scored], max_size: int) -> List[Scored]:
        """
        Heuristic neighbour selection.

        Walk candidates from most to least similar and keep one only if it is
        more similar to the base than to every neighbour already kept.
        Candidates must be sorted best first.
        """
        if len(candidates) <= max_size:
            return candidates
        ids = [other for _, other in candidates]
        base_sims = np.array([sim for sim, _ in candidates])
        vecs = self.data[ids].astype(np.float64)
        pairwise = vecs @ vecs.T
        kept: List[int] = []
        for i in range(len(candidates)):
            if len(kept) >= max_size:
                break
            if kept and np.any(pairwise[i, kept] > base_sims[i]):
                continue
            kept.append(i)
        return [candidates[i] for i in kept]


def build_index(
    keys: EmbeddingMatrix,
    m: int = 64,
    ef_construction: int = 500,
    seed: int = 0,
    num_threads: int = 1,
) -> HnswIndex:
    """Build an HNSW index over the rows of ``keys``."""
    return HnswIndex.build(
        keys, m=m, ef_construction=ef_construction, seed=seed, num_threads=num_threads
    )


def search(
    index: HnswIndex, keys: EmbeddingMatrix, q, b: int, ef_search: int
) -> SearchResult:
    """Approximate top-b maximum-inner-product search."""
    return index.search(keys, q, b, ef_search)
