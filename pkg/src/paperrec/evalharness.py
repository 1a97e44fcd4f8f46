"""Citation-prediction evaluation: hop-stratified pairs, AUC, scaling and
horizon sweeps.

The task: among pairs of papers 1-4 hops apart in the undirected citation
graph, rank 1-hop pairs above the rest by embedding cosine. AUC over that
ranking is the quality signal. Scaling curves retrain on nested subgraphs
(bins 0..t-1) and evaluate on a later bin, which is also how the forecasting
horizon h is realized: evaluation pairs come from bin t+h, scored with
vectors inferred from training-subgraph neighbours.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp
from scipy.stats import rankdata

from .citegraph import BinAssignment, CitationGraph, induced_by_mask
from .corpus import CorpusStore
from .embedding import EmbeddingMatrix
from .gbembed import SpectralParams, embed_graph

logger = logging.getLogger(__name__)

MAX_HOP = 4


@dataclass(frozen=True)
class HopPairSet:
    """Stratified node pairs with verified undirected hop distance 1..4."""

    pairs: np.ndarray  # int64 (m, 3): a, b, hop
    seed: int
    graph_digest: str
    shortfall: Mapping[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.pairs.ndim != 2 or self.pairs.shape[1] != 3:
            raise ValueError("pairs must be an (m, 3) array")
        if len(self.pairs):
            hops = self.pairs[:, 2]
            if hops.min() < 1 or hops.max() > MAX_HOP:
                raise ValueError(f"hop values must lie in [1, {MAX_HOP}]")
            if np.any(self.pairs[:, 0] == self.pairs[:, 1]):
                raise ValueError("pairs must have distinct endpoints")

    def __len__(self) -> int:
        return int(len(self.pairs))

    @property
    def labels(self) -> np.ndarray:
        """1 for 1-hop pairs, 0 otherwise."""
        return (self.pairs[:, 2] == 1).astype(np.int8)


@dataclass(frozen=True)
class EvalConfig:
    """One evaluation cell: t training bins, horizon h, pairs per hop class."""

    t: int
    h: int = 0
    k_pairs: int = 200
    eval_bin: int | None = None

    def __post_init__(self) -> None:
        if self.t < 1:
            raise ValueError("t must be >= 1")
        if self.h < 0:
            raise ValueError("h must be >= 0")
        if self.k_pairs < 1:
            raise ValueError("k_pairs must be >= 1")
        if self.eval_bin is not None and self.eval_bin < self.t:
            raise ValueError("eval_bin must be >= t (evaluation outside training bins)")

    @property
    def effective_eval_bin(self) -> int:
        return self.t + self.h if self.eval_bin is None else self.eval_bin


def _bfs_frontiers(adj: sp.csr_matrix, src: int, max_hop: int) -> list[np.ndarray]:
    """Nodes at exact depth 1..max_hop from src (undirected adjacency)."""
    n = adj.shape[0]
    visited = np.zeros(n, dtype=bool)
    visited[src] = True
    cur = np.zeros(n, dtype=np.float64)
    cur[src] = 1.0
    frontiers: list[np.ndarray] = []
    for _ in range(max_hop):
        nxt = (adj @ cur) > 0
        nxt &= ~visited
        visited |= nxt
        frontiers.append(np.flatnonzero(nxt))
        cur = nxt.astype(np.float64)
        if not frontiers[-1].size:
            frontiers.extend([np.zeros(0, dtype=np.int64)] * (max_hop - len(frontiers)))
            break
    return frontiers


def sample_hop_pairs(
    graph: CitationGraph,
    k_pairs: int,
    seed: int = 0,
    allowed: np.ndarray | None = None,
) -> HopPairSet:
    """Up to k_pairs node pairs at each hop distance 1..4, deterministically.

    Sources are visited in a seeded random order; each contributes at most
    one pair per hop class (one seeded draw from its exact-depth frontier).
    Hop classes the graph cannot fill are reported in the shortfall map, not
    an error. ``allowed`` optionally restricts both endpoints (paths may
    still pass through excluded nodes).
    """
    if k_pairs < 1:
        raise ValueError("k_pairs must be >= 1")
    if allowed is None:
        allowed_mask = np.ones(graph.n, dtype=bool)
    else:
        allowed_mask = np.asarray(allowed, dtype=bool)
        if len(allowed_mask) != graph.n:
            raise ValueError("allowed mask length must equal node count")
    rng = np.random.default_rng(seed)
    adj = graph.sym_adjacency()
    need = {h: k_pairs for h in range(1, MAX_HOP + 1)}
    buckets: dict[int, list[tuple[int, int]]] = {h: [] for h in range(1, MAX_HOP + 1)}
    seen: set[tuple[int, int]] = set()
    sources = rng.permutation(np.flatnonzero(allowed_mask))
    for src in sources.tolist():
        if all(v == 0 for v in need.values()):
            break
        frontiers = _bfs_frontiers(adj, src, MAX_HOP)
        for h in range(1, MAX_HOP + 1):
            if need[h] == 0:
                continue
            candidates = frontiers[h - 1]
            candidates = candidates[allowed_mask[candidates]]
            if not candidates.size:
                continue
            other = int(candidates[int(rng.integers(0, candidates.size))])
            pair = (min(src, other), max(src, other))
            if pair in seen:
                continue
            seen.add(pair)
            buckets[h].append(pair)
            need[h] -= 1
    rows = [(a, b, h) for h in range(1, MAX_HOP + 1) for a, b in buckets[h]]
    pairs = (
        np.asarray(rows, dtype=np.int64) if rows else np.zeros((0, 3), dtype=np.int64)
    )
    shortfall = {h: need[h] for h in range(1, MAX_HOP + 1) if need[h] > 0}
    if shortfall:
        logger.info("sample_hop_pairs: shortfall %s", shortfall)
    return HopPairSet(pairs=pairs, seed=seed, graph_digest=graph.digest(), shortfall=shortfall)


@dataclass(frozen=True)
class ScoredPairs:
    """Cosine scores for the pairs both of whose endpoints had vectors."""

    scores: np.ndarray  # float64
    labels: np.ndarray  # int8, 1 = 1-hop
    hops: np.ndarray  # int64
    n_excluded: int


def score_pairs(emb: EmbeddingMatrix, pair_set: HopPairSet) -> ScoredPairs:
    """Cosine per pair; pairs touching the missing set are excluded, counted."""
    pairs = pair_set.pairs
    if emb.n == 0:
        raise ValueError("embedding is empty")
    if len(pairs) and int(pairs[:, :2].max()) >= emb.n:
        raise ValueError("pair endpoint outside embedding")
    present = np.ones(emb.n, dtype=bool)
    for i in emb.missing:
        present[i] = False
    a = pairs[:, 0]
    b = pairs[:, 1]
    ok = present[a] & present[b]
    va = emb.data[a[ok]].astype(np.float64)
    vb = emb.data[b[ok]].astype(np.float64)
    na = np.linalg.norm(va, axis=1)
    nb = np.linalg.norm(vb, axis=1)
    na[na == 0.0] = 1.0
    nb[nb == 0.0] = 1.0
    scores = np.einsum("ij,ij->i", va, vb) / (na * nb)
    return ScoredPairs(
        scores=scores,
        labels=(pairs[ok, 2] == 1).astype(np.int8),
        hops=pairs[ok, 2].copy(),
        n_excluded=int(np.count_nonzero(~ok)),
    )


def auc(scores: np.ndarray, labels: np.ndarray) -> float:
    """Probability a random positive outranks a random negative, ties half.

    Exact rank-based computation, O(n log n).
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError("scores and labels must be 1-d arrays of equal length")
    n_pos = int(np.count_nonzero(labels == 1))
    n_neg = int(len(labels) - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auc needs both classes present")
    ranks = rankdata(scores)
    pos_rank_sum = float(ranks[labels == 1].sum())
    return (pos_rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def best_threshold_accuracy(scores: np.ndarray, labels: np.ndarray) -> tuple[float, float]:
    """(threshold, accuracy) of the best score >= threshold classifier."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(np.int8)
    if len(scores) == 0:
        raise ValueError("no scores")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_labels = labels[order]
    n_pos = int(np.count_nonzero(labels == 1))
    # Predicting positive for the top-i scores: correct = positives in the
    # top i plus negatives below.
    tp = np.concatenate([[0], np.cumsum(sorted_labels == 1)])
    fp = np.concatenate([[0], np.cumsum(sorted_labels == 0)])
    correct = tp + (len(labels) - n_pos - fp)
    best = int(np.argmax(correct))
    accuracy = float(correct[best]) / len(labels)
    threshold = float(sorted_scores[best - 1]) if best > 0 else float("inf")
    return threshold, accuracy


def year_bins(store: CorpusStore, n_bins: int) -> BinAssignment:
    """Equal-count bins in publication-year order (ties by index).

    Papers with unknown year sort last. Bin boundaries follow order, not
    calendar years, so every bin is populated.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    if store.n == 0:
        raise ValueError("store is empty")
    keys = [
        (rec.year if rec.year is not None else float("inf"), i)
        for i, rec in enumerate(store)
    ]
    order = [i for _, i in sorted(keys)]
    labels = np.empty(store.n, dtype=np.int32)
    for pos, idx in enumerate(order):
        labels[idx] = pos * n_bins // store.n
    return BinAssignment(n_bins, labels)


@dataclass(frozen=True)
class CurvePoint:
    t: int
    h: int
    auc: float
    n_pairs: int
    excluded: int


def curve_csv(points: Sequence[CurvePoint]) -> str:
    rows = ["t,h,auc,n_pairs,excluded"]
    for p in points:
        rows.append(f"{p.t},{p.h},{p.auc:.6f},{p.n_pairs},{p.excluded}")
    return "\n".join(rows) + "\n"


def _neighbor_centroid_embedding(
    graph: CitationGraph,
    eval_nodes: np.ndarray,
    train_emb: EmbeddingMatrix,
    new_of_old: np.ndarray,
) -> tuple[EmbeddingMatrix, int]:
    """Vectors for eval nodes: centroid of their in-training neighbours.

    Returns a full-width embedding whose only present rows are the eval
    nodes that had at least one usable neighbour, plus the count of nodes
    dropped for having none.
    """
    n = graph.n
    data = np.zeros((n, train_emb.d), dtype=np.float32)
    missing = set(range(n))
    dropped = 0
    for node in eval_nodes.tolist():
        neigh = graph.undirected_neighbors(node)
        mapped = new_of_old[neigh.astype(np.int64)]
        mapped = mapped[mapped >= 0]
        usable = [int(s) for s in mapped if not train_emb.is_missing(int(s))]
        if not usable:
            dropped += 1
            continue
        mean = train_emb.data[usable].astype(np.float64).mean(axis=0)
        norm = np.linalg.norm(mean)
        if norm < 1e-12:
            dropped += 1
            continue
        data[node] = (mean / norm).astype(np.float32)
        missing.discard(node)
    return (
        EmbeddingMatrix(data=data, method="gb", missing=frozenset(missing)),
        dropped,
    )


def _eval_cell(
    graph: CitationGraph,
    bins: BinAssignment,
    t: int,
    h: int,
    k_pairs: int,
    seed: int,
    train_emb: EmbeddingMatrix,
    new_of_old: np.ndarray,
) -> CurvePoint:
    eval_bin = t + h
    eval_nodes = bins.members(eval_bin)
    cell_emb, dropped = _neighbor_centroid_embedding(graph, eval_nodes, train_emb, new_of_old)
    allowed = np.zeros(graph.n, dtype=bool)
    allowed[cell_emb.present_indices()] = True
    pair_seed = seed * 1_000_003 + t * 1009 + h
    pair_set = sample_hop_pairs(graph, k_pairs, seed=pair_seed, allowed=allowed)
    scored = score_pairs(cell_emb, pair_set)
    value = auc(scored.scores, scored.labels)
    return CurvePoint(t, h, value, len(scored.scores), scored.n_excluded + dropped)


def _full_graph_point(
    graph: CitationGraph, t: int, k_pairs: int, params: SpectralParams, seed: int
) -> CurvePoint:
    emb = embed_graph(graph, params)
    pair_set = sample_hop_pairs(graph, k_pairs, seed=seed * 1_000_003 + t * 1009)
    scored = score_pairs(emb, pair_set)
    return CurvePoint(t, 0, auc(scored.scores, scored.labels), len(scored.scores), scored.n_excluded)


def _train(
    graph: CitationGraph, bins: BinAssignment, t: int, params: SpectralParams
) -> tuple[EmbeddingMatrix, np.ndarray]:
    keep = bins.labels < t
    sub, smap = induced_by_mask(graph, keep)
    if sub.n == 0:
        raise ValueError(f"training bins 0..{t - 1} contain no nodes")
    train_params = params if params.d <= sub.n else SpectralParams(
        d=sub.n,
        K=params.K,
        mu=params.mu,
        theta=params.theta,
        oversample=params.oversample,
        power_iters=params.power_iters,
        seed=params.seed,
    )
    emb = embed_graph(sub, train_params)
    return emb, smap.new_of_old


def scaling_curve(
    store: CorpusStore | None,
    graph: CitationGraph,
    bins: BinAssignment,
    t_values: Sequence[int],
    config: EvalConfig,
    params: SpectralParams = SpectralParams(),
    seed: int = 0,
) -> list[CurvePoint]:
    """AUC as the training subgraph grows: one point per t in t_values.

    For each t, bins 0..t-1 are embedded and pairs from bin t + config.h are
    scored via training-neighbour centroids. t equal to the bin count (with
    h = 0) degenerates to direct evaluation on the full graph.
    """
    if store is not None and store.n != graph.n:
        raise ValueError("store and graph sizes differ")
    if len(bins.labels) != graph.n:
        raise ValueError("bin assignment does not cover the graph")
    if not t_values:
        raise ValueError("t_values must be non-empty")
    points: list[CurvePoint] = []
    for t in t_values:
        if t < 1:
            raise ValueError("t must be >= 1")
        if t == bins.n_bins:
            if config.h != 0:
                raise ValueError("t covering all bins requires h = 0")
            points.append(_full_graph_point(graph, t, config.k_pairs, params, seed))
            continue
        if t + config.h >= bins.n_bins:
            raise ValueError(
                f"t + h = {t + config.h} must stay below n_bins = {bins.n_bins}"
            )
        train_emb, new_of_old = _train(graph, bins, t, params)
        points.append(
            _eval_cell(graph, bins, t, config.h, config.k_pairs, seed, train_emb, new_of_old)
        )
        logger.info("scaling_curve t=%d: auc=%.4f", t, points[-1].auc)
    return points


def horizon_sweep(
    store: CorpusStore | None,
    graph: CitationGraph,
    bins: BinAssignment,
    t: int,
    h_values: Sequence[int],
    config: EvalConfig,
    params: SpectralParams = SpectralParams(),
    seed: int = 0,
) -> list[CurvePoint]:
    """AUC as the forecasting horizon grows, training bins fixed at t.

    The training embedding is built once and shared across horizons; only
    the evaluation bin moves.
    """
    if store is not None and store.n != graph.n:
        raise ValueError("store and graph sizes differ")
    if not h_values:
        raise ValueError("h_values must be non-empty")
    if t < 1 or t >= bins.n_bins:
        raise ValueError(f"t must lie in [1, {bins.n_bins - 1}]")
    for h in h_values:
        if h < 0:
            raise ValueError("h must be >= 0")
        if t + h >= bins.n_bins:
            raise ValueError(f"t + h = {t + h} is beyond the last bin {bins.n_bins - 1}")
    train_emb, new_of_old = _train(graph, bins, t, params)
    points = []
    for h in h_values:
        points.append(
            _eval_cell(graph, bins, t, h, config.k_pairs, seed, train_emb, new_of_old)
        )
        logger.info("horizon_sweep h=%d: auc=%.4f", h, points[-1].auc)
    return points


def pairset_to_jsonl(pair_set: HopPairSet) -> Iterable[str]:
    """Export: one meta line, then one line per pair."""
    yield json.dumps(
        {
            "seed": pair_set.seed,
            "graphDigest": pair_set.graph_digest,
            "shortfall": {str(k): v for k, v in sorted(pair_set.shortfall.items())},
        }
    )
    for a, b, h in pair_set.pairs.tolist():
        yield json.dumps({"a": a, "b": b, "hop": h})


def pairset_from_jsonl(source: str | Path | IO[str]) -> HopPairSet:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return pairset_from_jsonl(fh)
    lines = [line for line in (l.strip() for l in source) if line]
    if not lines:
        raise ValueError("empty pair set file")
    meta = json.loads(lines[0])
    rows = []
    for line in lines[1:]:
        obj = json.loads(line)
        rows.append((int(obj["a"]), int(obj["b"]), int(obj["hop"])))
    pairs = np.asarray(rows, dtype=np.int64) if rows else np.zeros((0, 3), dtype=np.int64)
    return HopPairSet(
        pairs=pairs,
        seed=int(meta["seed"]),
        graph_digest=str(meta["graphDigest"]),
        shortfall={int(k): int(v) for k, v in meta.get("shortfall", {}).items()},
    )
