"""Independent reference implementations used to cross-check the library.

Everything here is deliberately naive: plain-python BFS, O(n^2) AUC, exhaustive
nearest-neighbour scans, dictionary-based fusion. Nothing imports library
internals beyond public data containers, so a bug in the library cannot hide
in its own oracle.
"""

from __future__ import annotations

from collections import deque

import numpy as np


def bfs_hop_oracle(n: int, edges: list[tuple[int, int]], a: int, b: int, max_hops: int) -> int | None:
    """Shortest undirected path length via dict-of-sets BFS; None beyond max_hops."""
    if a == b:
        return 0
    adj: dict[int, set[int]] = {i: set() for i in range(n)}
    for u, v in edges:
        adj[u].add(v)
        adj[v].add(u)
    dist = {a: 0}
    queue = deque([a])
    while queue:
        node = queue.popleft()
        if dist[node] >= max_hops:
            continue
        for nb in adj[node]:
            if nb not in dist:
                dist[nb] = dist[node] + 1
                if nb == b:
                    return dist[nb]
                queue.append(nb)
    return None


def auc_oracle(scores: list[float], labels: list[int]) -> float:
    """Brute-force pairwise AUC: P(pos > neg) + 0.5 * P(tie)."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    if not pos or not neg:
        raise ValueError("both classes required")
    wins = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1.0
            elif p == q:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def knn_oracle(matrix: np.ndarray, query: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Exact top-k by cosine over every row; ties broken by ascending row index."""
    q = np.asarray(query, dtype=np.float64)
    q = q / np.linalg.norm(q)
    scored = []
    for i in range(matrix.shape[0]):
        row = np.asarray(matrix[i], dtype=np.float64)
        norm = np.linalg.norm(row)
        if norm == 0:
            continue
        scored.append((i, float(np.dot(row, q) / norm)))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:k]


def rrf_oracle(lists: list[list[int]], constant: float = 60.0) -> list[tuple[int, float]]:
    """Reciprocal-rank fusion over item-id lists, rank starting at 1."""
    scores: dict[int, float] = {}
    for ranked in lists:
        for rank, item in enumerate(ranked, start=1):
            scores[item] = scores.get(item, 0.0) + 1.0 / (constant + rank)
    return sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))


def minmax_weighted_oracle(
    a: list[tuple[int, float]], b: list[tuple[int, float]], w: float
) -> list[tuple[int, float]]:
    """Weighted fusion of (item, score) lists after per-list min-max scaling."""

    def norm(pairs: list[tuple[int, float]]) -> dict[int, float]:
        if not pairs:
            return {}
        values = [s for _, s in pairs]
        lo, hi = min(values), max(values)
        if hi == lo:
            return {i: 1.0 for i, _ in pairs}
        return {i: (s - lo) / (hi - lo) for i, s in pairs}

    na, nb = norm(a), norm(b)
    fused = {i: w * na.get(i, 0.0) + (1.0 - w) * nb.get(i, 0.0) for i in set(na) | set(nb)}
    return sorted(fused.items(), key=lambda kv: (-kv[1], kv[0]))


def author_centroid_oracle(
    matrix: np.ndarray,
    present: set[int],
    paper_authors: dict[int, list[str]],
    query_vec: np.ndarray,
    exclude: set[str],
) -> list[tuple[str, float]]:
    """Rank authors by cosine(query, normalized mean of their papers' vectors)."""
    by_author: dict[str, list[int]] = {}
    for paper, authors in paper_authors.items():
        if paper not in present:
            continue
        for name in authors:
            by_author.setdefault(name, []).append(paper)
    q = np.asarray(query_vec, dtype=np.float64)
    q = q / np.linalg.norm(q)
    out = []
    for name, papers in by_author.items():
        if name in exclude:
            continue
        centroid = np.mean([np.asarray(matrix[p], dtype=np.float64) for p in papers], axis=0)
        norm = np.linalg.norm(centroid)
        if norm == 0:
            continue
        out.append((name, float(np.dot(centroid / norm, q))))
    out.sort(key=lambda kv: (-kv[1], kv[0]))
    return out


def coverage_oracle(records: list) -> tuple[int, int, int]:
    """(n_abstract, n_linked, n_both) by brute-force recount over records.

    Linked means the paper cites or is cited by another corpus paper; the
    caller passes records whose references were already resolved.
    """
    ids = {rec.external_id for rec in records}
    cited = set()
    for rec in records:
        for ref in rec.references:
            if ref in ids:
                cited.add(ref)
    n_abs = n_link = n_both = 0
    for rec in records:
        has_abs = rec.abstract is not None and len(rec.abstract) > 0
        has_link = bool(set(rec.references) & ids) or rec.external_id in cited
        n_abs += has_abs
        n_link += has_link
        n_both += has_abs and has_link
    return n_abs, n_link, n_both
