"""Approximate nearest-neighbour retrieval over embedding rows.

A hierarchical navigable small-world graph (numpy + heapq, no native
extensions): each indexed row gets a random level; upper levels form sparse
express lanes for greedy descent and level 0 holds the dense neighbourhood
graph searched with a bounded frontier. The metric is cosine over unit-
normalized rows, so similarity is a dot product and "distance" below is its
negation. Missing embedding rows are never indexed.

Contracts that matter to callers: results are sorted by descending cosine
with ascending corpus index breaking ties; build is deterministic for a
given seed and embedding; persistence stores the graph plus the source
embedding digest and refuses to load against a different embedding.
"""

from __future__ import annotations

import heapq
import logging
import math
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .embedding import EmbeddingMatrix

logger = logging.getLogger(__name__)

_FORMAT_VERSION = 1


class Neighbor(NamedTuple):
    """One retrieval hit: corpus index and cosine similarity to the query."""

    index: int
    cosine: float


class IndexDigestError(RuntimeError):
    """Persisted index does not match the embedding it is being loaded against."""


def _normalize_query(vector: np.ndarray, d: int) -> np.ndarray:
    v = np.asarray(vector, dtype=np.float64).ravel()
    if v.shape != (d,):
        raise ValueError(f"query has dimension {v.shape[0] if v.ndim else 0}, index has {d}")
    norm = np.linalg.norm(v)
    if norm < 1e-12:
        raise ValueError("query vector must be non-zero")
    return (v / norm).astype(np.float32)


class AnnIndex:
    """HNSW index over the non-missing rows of one embedding matrix."""

    def __init__(
        self,
        vectors: np.ndarray,
        slot_to_corpus: np.ndarray,
        levels: np.ndarray,
        graph: list[dict[int, np.ndarray]],
        entry: int,
        max_degree: int,
        ef_construction: int,
        seed: int,
        source_digest: str,
    ):
        self._vectors = vectors  # float32 (count, d), unit rows
        self._slot_to_corpus = slot_to_corpus
        self._levels = levels
        self._graph = graph  # graph[level][slot] -> np.int32 neighbour slots
        self._entry = entry
        self.max_degree = max_degree
        self.ef_construction = ef_construction
        self.seed = seed
        self.source_digest = source_digest

    @property
    def count(self) -> int:
        return int(self._vectors.shape[0])

    @property
    def d(self) -> int:
        return int(self._vectors.shape[1])

    @property
    def max_level(self) -> int:
        return len(self._graph) - 1

    def corpus_indices(self) -> np.ndarray:
        """Corpus indices of all indexed rows, in slot order."""
        return self._slot_to_corpus.copy()

    def vector(self, corpus_index: int) -> np.ndarray:
        """Stored unit-norm row for an indexed corpus index."""
        reverse = getattr(self, "_corpus_to_slot", None)
        if reverse is None:
            reverse = {int(c): s for s, c in enumerate(self._slot_to_corpus.tolist())}
            self._corpus_to_slot = reverse
        slot = reverse.get(int(corpus_index))
        if slot is None:
            raise KeyError(f"corpus index {corpus_index} is not indexed")
        return self._vectors[slot]

    # -- search ------------------------------------------------------------

    def _greedy_step(self, q: np.ndarray, slot: int, dist: float, level: int) -> tuple[int, float]:
        """Descend one layer greedily to the locally nearest slot."""
        while True:
            neigh = self._graph[level].get(slot)
            if neigh is None or neigh.size == 0:
                return slot, dist
            dists = -(self._vectors[neigh] @ q)
            j = int(np.argmin(dists))
            if dists[j] >= dist:
                return slot, dist
            slot = int(neigh[j])
            dist = float(dists[j])

    def _search_layer(
        self,
        q: np.ndarray,
        entries: list[tuple[float, int]],
        ef: int,
        level: int,
        visited: np.ndarray,
    ) -> list[tuple[float, int]]:
        """Bounded best-first search; returns up to ef (dist, slot) pairs."""
        candidates = list(entries)
        heapq.heapify(candidates)
        # best holds (-dist, slot) so the heap root is the current worst hit.
        best = [(-d, s) for d, s in entries]
        heapq.heapify(best)
        layer = self._graph[level]
        vectors = self._vectors
        while candidates:
            dist, slot = heapq.heappop(candidates)
            if len(best) >= ef and dist > -best[0][0]:
                break
            neigh = layer.get(slot)
            if neigh is None or neigh.size == 0:
                continue
            fresh = neigh[~visited[neigh]]
            if fresh.size == 0:
                continue
            visited[fresh] = True
            dists = -(vectors[fresh] @ q)
            worst = -best[0][0] if best else math.inf
            for dn, sn in zip(dists.tolist(), fresh.tolist()):
                if len(best) < ef:
                    heapq.heappush(candidates, (dn, sn))
                    heapq.heappush(best, (-dn, sn))
                    worst = -best[0][0]
                elif dn < worst:
                    heapq.heappush(candidates, (dn, sn))
                    heapq.heapreplace(best, (-dn, sn))
                    worst = -best[0][0]
        return [(-nd, s) for nd, s in best]

    def _descend(self, q: np.ndarray, stop_level: int) -> tuple[int, float]:
        slot = self._entry
        dist = float(-(self._vectors[slot] @ q))
        for level in range(self.max_level, stop_level, -1):
            slot, dist = self._greedy_step(q, slot, dist, level)
        return slot, dist

    def _exact_hits(self, q64: np.ndarray, k: int) -> list[Neighbor]:
        cosines = self._vectors.astype(np.float64) @ q64
        order = np.lexsort((self._slot_to_corpus, -cosines))[:k]
        return [Neighbor(int(self._slot_to_corpus[s]), float(cosines[s])) for s in order]

    def query(self, vector: np.ndarray, k: int, ef_search: int = 100) -> list[Neighbor]:
        """Up to k nearest indexed rows by cosine.

        Falls back to an exact scan when k covers the whole index, so
        oversized k returns every indexed row, exactly ordered.
        """
        if k < 1:
            raise ValueError("k must be >= 1")
        if ef_search < 1:
            raise ValueError("ef_search must be >= 1")
        q = _normalize_query(vector, self.d)
        q64 = q.astype(np.float64)
        if k >= self.count:
            return self._exact_hits(q64, k)
        slot, dist = self._descend(q, 0)
        visited = np.zeros(self.count, dtype=bool)
        visited[slot] = True
        hits = self._search_layer(q, [(dist, slot)], max(ef_search, k), 0, visited)
        slots = np.asarray([s for _, s in hits], dtype=np.int64)
        # Final scores in float64 against the stored unit rows; the search
        # ran in float32, which can reorder near-ties.
        cosines = self._vectors[slots].astype(np.float64) @ q64
        corpus = self._slot_to_corpus[slots]
        order = np.lexsort((corpus, -cosines))[:k]
        return [Neighbor(int(corpus[i]), float(cosines[i])) for i in order]

    # -- persistence ---------------------------------------------------------

    def save(self, path) -> None:
        """Persist graph + metadata (npz); vectors are re-derived at load.

        Accepts a path or a writable binary file object.
        """
        arrays: dict[str, np.ndarray] = {
            "meta": np.asarray(
                [
                    _FORMAT_VERSION,
                    self.d,
                    self.max_degree,
                    self.ef_construction,
                    self.seed,
                    self._entry,
                    self.max_level,
                ],
                dtype=np.int64,
            ),
            "digest": np.frombuffer(self.source_digest.encode("ascii"), dtype=np.uint8),
            "slot_to_corpus": self._slot_to_corpus,
            "levels": self._levels,
        }
        for level, layer in enumerate(self._graph):
            slots = np.asarray(sorted(layer), dtype=np.int64)
            offsets = np.zeros(len(slots) + 1, dtype=np.int64)
            chunks = []
            for i, s in enumerate(slots):
                chunks.append(layer[int(s)])
                offsets[i + 1] = offsets[i] + len(layer[int(s)])
            arrays[f"l{level}_slots"] = slots
            arrays[f"l{level}_off"] = offsets
            arrays[f"l{level}_dat"] = (
                np.concatenate(chunks).astype(np.int32) if chunks else np.zeros(0, np.int32)
            )
        if isinstance(path, (str, Path)):
            with open(path, "wb") as fh:
                np.savez(fh, **arrays)
        else:
            np.savez(path, **arrays)

    @classmethod
    def load(cls, path: str | Path, emb: EmbeddingMatrix) -> "AnnIndex":
        """Load a persisted index and bind it to its source embedding.

        The stored digest must match emb.digest(); a mismatch means the
        index was built from different vectors and is unusable.
        """
        with np.load(path) as npz:
            meta = npz["meta"]
            if int(meta[0]) != _FORMAT_VERSION:
                raise ValueError(f"unsupported index format version {int(meta[0])}")
            digest = bytes(npz["digest"]).decode("ascii")
            if digest != emb.digest():
                raise IndexDigestError(
                    "index was built from a different embedding "
                    f"(stored {digest[:12]}..., embedding {emb.digest()[:12]}...)"
                )
            d = int(meta[1])
            if d != emb.d:
                raise IndexDigestError(f"index dimension {d} != embedding dimension {emb.d}")
            slot_to_corpus = npz["slot_to_corpus"].astype(np.int64)
            levels = npz["levels"].astype(np.int32)
            max_level = int(meta[6])
            graph: list[dict[int, np.ndarray]] = []
            for level in range(max_level + 1):
                slots = npz[f"l{level}_slots"]
                offsets = npz[f"l{level}_off"]
                dat = npz[f"l{level}_dat"]
                layer = {
                    int(s): dat[offsets[i] : offsets[i + 1]].copy()
                    for i, s in enumerate(slots)
                }
                graph.append(layer)
        data = emb.data[slot_to_corpus].astype(np.float64)
        norms = np.linalg.norm(data, axis=1)
        norms[norms == 0.0] = 1.0
        vectors = (data / norms[:, None]).astype(np.float32)
        return cls(
            vectors,
            slot_to_corpus,
            levels,
            graph,
            int(meta[5]),
            int(meta[2]),
            int(meta[3]),
            int(meta[4]),
            digest,
        )


class _Builder:
    """Incremental HNSW construction; one instance per build_index call."""

    def __init__(self, vectors: np.ndarray, max_degree: int, ef_construction: int, seed: int):
        self.vectors = vectors
        self.m = max_degree
        self.m0 = 2 * max_degree
        self.ef = ef_construction
        self.level_scale = 1.0 / math.log(max(max_degree, 2))
        self.rng = np.random.default_rng(seed)
        self.count = vectors.shape[0]
        self.levels = np.zeros(self.count, dtype=np.int32)
        self.graph: list[dict[int, np.ndarray]] = [dict()]
        self.entry = -1
        self.max_level = -1

    def _draw_level(self) -> int:
        u = 1.0 - float(self.rng.random())  # in (0, 1], log is finite
        return int(-math.log(u) * self.level_scale)

    def _cap(self, level: int) -> int:
        return self.m0 if level == 0 else self.m

    def _shrink(self, slot: int, level: int) -> None:
        """Keep only the nearest cap neighbours of slot at this level."""
        neigh = self.graph[level][slot]
        cap = self._cap(level)
        if len(neigh) <= cap:
            return
        dists = -(self.vectors[neigh] @ self.vectors[slot])
        keep = np.argsort(dists, kind="stable")[:cap]
        self.graph[level][slot] = neigh[np.sort(keep)]

    def insert(self, slot: int) -> None:
        level = self._draw_level()
        self.levels[slot] = level
        while len(self.graph) <= level:
            self.graph.append(dict())
        q = self.vectors[slot]
        if self.entry < 0:
            for lvl in range(level + 1):
                self.graph[lvl][slot] = np.zeros(0, dtype=np.int32)
            self.entry = slot
            self.max_level = level
            return
        # Greedy descent through layers above the insertion level.
        cur = self.entry
        dist = float(-(self.vectors[cur] @ q))
        idx = _index_view(self)
        for lvl in range(self.max_level, level, -1):
            cur, dist = idx._greedy_step(q, cur, dist, lvl)
        entries = [(dist, cur)]
        for lvl in range(min(level, self.max_level), -1, -1):
            visited = np.zeros(self.count, dtype=bool)
            visited[[s for _, s in entries]] = True
            hits = idx._search_layer(q, entries, self.ef, lvl, visited)
            hits.sort()
            cap = self._cap(lvl)
            chosen = np.asarray([s for _, s in hits[:cap]], dtype=np.int32)
            self.graph[lvl][slot] = chosen
            for nb in chosen.tolist():
                self.graph[lvl][nb] = np.append(self.graph[lvl][nb], np.int32(slot))
                self._shrink(nb, lvl)
            entries = hits
        if level > self.max_level:
            # Layers above the old top exist only for this node so far.
            for lvl in range(self.max_level + 1, level + 1):
                self.graph[lvl][slot] = np.zeros(0, dtype=np.int32)
            self.entry = slot
            self.max_level = level


def _index_view(builder: _Builder) -> AnnIndex:
    """AnnIndex facade over a builder's partial graph (search reuse)."""
    view = AnnIndex.__new__(AnnIndex)
    view._vectors = builder.vectors
    view._graph = builder.graph
    view._entry = builder.entry
    return view


def build_index(
    emb: EmbeddingMatrix,
    max_degree: int = 32,
    ef_construction: int = 200,
    seed: int = 0,
) -> AnnIndex:
    """Index the non-missing rows of an embedding.

    Deterministic for a given (embedding, seed) pair. Raises ValueError when
    nothing is indexable.
    """
    if max_degree < 2:
        raise ValueError("max_degree must be >= 2")
    if ef_construction < 1:
        raise ValueError("ef_construction must be >= 1")
    present = emb.present_indices()
    if len(present) == 0:
        raise ValueError("embedding has no present rows to index")
    data = emb.data[present].astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    if np.any(norms < 1e-12):
        raise ValueError("present rows must be non-zero")
    vectors = (data / norms[:, None]).astype(np.float32)
    builder = _Builder(vectors, max_degree, ef_construction, seed)
    for slot in range(len(present)):
        builder.insert(slot)
    logger.info(
        "indexed %d rows, d=%d, levels=%d", len(present), emb.d, builder.max_level + 1
    )
    return AnnIndex(
        vectors,
        present.astype(np.int64),
        builder.levels,
        builder.graph,
        builder.entry,
        max_degree,
        ef_construction,
        seed,
        emb.digest(),
    )


def brute_force_knn(emb: EmbeddingMatrix, vector: np.ndarray, k: int) -> list[Neighbor]:
    """Exact k nearest non-missing rows; the oracle the index is judged by.

    Float64 throughout; same ordering contract as AnnIndex.query.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    present = emb.present_indices()
    if len(present) == 0:
        return []
    q = np.asarray(vector, dtype=np.float64).ravel()
    if q.shape != (emb.d,):
        raise ValueError(f"query has dimension {len(q)}, embedding has {emb.d}")
    qn = np.linalg.norm(q)
    if qn < 1e-12:
        raise ValueError("query vector must be non-zero")
    data = emb.data[present].astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    norms[norms == 0.0] = 1.0
    cosines = (data @ q) / (norms * qn)
    order = np.lexsort((present, -cosines))[:k]
    return [Neighbor(int(present[i]), float(cosines[i])) for i in order]


def recall_at_k(
    index: AnnIndex,
    emb: EmbeddingMatrix,
    queries: np.ndarray | Sequence[np.ndarray],
    k: int,
    ef_search: int = 100,
) -> float:
    """Mean fraction of the exact top-k the index retrieves, over queries."""
    queries = np.asarray(queries, dtype=np.float64)
    if queries.ndim == 1:
        queries = queries[None, :]
    if queries.shape[0] == 0:
        raise ValueError("need at least one query")
    total = 0.0
    for q in queries:
        exact = {nb.index for nb in brute_force_knn(emb, q, k)}
        approx = {nb.index for nb in index.query(q, k, ef_search)}
        total += len(exact & approx) / max(len(exact), 1)
    return total / queries.shape[0]
