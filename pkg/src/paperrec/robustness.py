"""Corner-case machinery: duplicate spikes, cross-embedding discrepancies,
and missing-vector imputation.

The top-1 cosine histogram makes near-duplicate contamination visible as a
spike near 1. Discrepancy flags cross-check the two embedding families: a
pair that looks identical in content but unrelated in the graph is a
duplicate or metadata error candidate. Imputation fills missing vectors from
references (centroid) or from neighbours in the other embedding
(better-together); imputed rows are always flagged, never silently mixed in.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Sequence

import numpy as np

from .annindex import AnnIndex
from .citegraph import CitationGraph
from .corpus import CorpusStore
from .embedding import EmbeddingMatrix

logger = logging.getLogger(__name__)


class UnimputableError(ValueError):
    """No usable signal to impute this paper's vector from."""


def _pair_cosine(emb: EmbeddingMatrix, i: int, j: int) -> float | None:
    if emb.is_missing(i) or emb.is_missing(j):
        return None
    return emb.cosine(i, j)


@dataclass(frozen=True)
class Top1Histogram:
    """Distribution of nearest-non-self-neighbour cosines over a sample."""

    counts: np.ndarray
    edges: np.ndarray
    values: np.ndarray  # one top-1 cosine per sampled query

    @property
    def sample_size(self) -> int:
        return int(len(self.values))

    def fraction_at_least(self, threshold: float) -> float:
        return float(np.count_nonzero(self.values >= threshold)) / len(self.values)

    @property
    def fraction_ge_099(self) -> float:
        return self.fraction_at_least(0.99)


def top1_cosine_histogram(
    index: AnnIndex,
    sample: Sequence[int],
    bins: int = 100,
    ef_search: int = 100,
    threads: int = 1,
) -> Top1Histogram:
    """Top-1 (self excluded) cosine for each sampled query, binned over [-1, 1].

    Histogram mass equals the sample size; the fraction of values >= 0.99 is
    the duplicate-spike indicator. Queries are independent, so threads > 1
    fans them out over shared read-only state.
    """
    sample = list(sample)
    if not sample:
        raise ValueError("sample must be non-empty")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    if index.count < 2:
        raise ValueError("index must hold at least two rows")
    indexed = set(index.corpus_indices().tolist())
    for q in sample:
        if q not in indexed:
            raise ValueError(f"sample index {q} is not an indexed row")

    def top1(q: int) -> float:
        vec = index.vector(q)
        hits = index.query(vec, 2, ef_search)
        best = next((nb for nb in hits if nb.index != q), None)
        if best is None:
            # Both hits were self-ties; widen once. Cannot recur: count >= 2.
            hits = index.query(vec, index.count, ef_search)
            best = next(nb for nb in hits if nb.index != q)
        return best.cosine

    if threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = np.fromiter(pool.map(top1, sample), dtype=np.float64, count=len(sample))
    else:
        values = np.fromiter(map(top1, sample), dtype=np.float64, count=len(sample))
    # float32 round-off can push identical rows a hair past 1.0.
    values = np.clip(values, -1.0, 1.0)
    counts, edges = np.histogram(values, bins=bins, range=(-1.0, 1.0))
    return Top1Histogram(counts=counts, edges=edges, values=values)


@dataclass(frozen=True)
class DuplicatePair:
    """Content-near-identical pair; graph_cosine present when both GB rows exist."""

    i: int
    j: int
    content_cosine: float
    graph_cosine: float | None = None


def detect_duplicates(
    cbf_index: AnnIndex,
    threshold: float = 0.99,
    gb_emb: EmbeddingMatrix | None = None,
    k: int = 5,
    ef_search: int = 100,
) -> list[DuplicatePair]:
    """Pairs (i, j), i < j, whose content cosine reaches the threshold.

    Scans each indexed row's top-k neighbours, so clusters wider than k are
    reported pairwise-incompletely (duplicates in practice come in pairs).
    The scan is symmetric: each member queries its own neighbourhood, so the
    flag set does not depend on row order.
    """
    if not 0.0 < threshold <= 1.0:
        raise ValueError("threshold must lie in (0, 1]")
    found: dict[tuple[int, int], float] = {}
    for q in cbf_index.corpus_indices().tolist():
        vec = cbf_index.vector(q)
        for nb in cbf_index.query(vec, k, ef_search):
            if nb.index == q:
                continue
            if min(1.0, nb.cosine) >= threshold:
                pair = (min(q, nb.index), max(q, nb.index))
                if pair not in found:
                    found[pair] = min(1.0, nb.cosine)
    out = []
    for (i, j), cos in sorted(found.items()):
        graph_cos = _pair_cosine(gb_emb, i, j) if gb_emb is not None else None
        out.append(DuplicatePair(i, j, cos, graph_cos))
    logger.info("detect_duplicates: %d pairs at threshold %.3f", len(out), threshold)
    return out


@dataclass(frozen=True)
class FlaggedPair:
    i: int
    j: int
    content_cosine: float
    graph_cosine: float


@dataclass(frozen=True)
class DiscrepancyReport:
    """Pairs content-similar but graph-dissimilar, plus unevaluable pairs."""

    flagged: tuple[FlaggedPair, ...]
    unevaluable: tuple[tuple[int, int], ...]

    @property
    def n_unevaluable(self) -> int:
        return len(self.unevaluable)


def discrepancy_flags(
    cbf_emb: EmbeddingMatrix,
    gb_emb: EmbeddingMatrix,
    tau_hi: float = 0.95,
    tau_lo: float = 0.2,
    sample: Iterable[tuple[int, int]] = (),
) -> DiscrepancyReport:
    """Flag sampled pairs with content cosine >= tau_hi and graph cosine <= tau_lo.

    Pairs missing a vector on either side are excluded and tallied as
    unevaluable.
    """
    if cbf_emb.n != gb_emb.n:
        raise ValueError(f"embeddings cover different corpora: {cbf_emb.n} vs {gb_emb.n}")
    flagged: list[FlaggedPair] = []
    unevaluable: list[tuple[int, int]] = []
    for i, j in sample:
        content = _pair_cosine(cbf_emb, i, j)
        graph = _pair_cosine(gb_emb, i, j)
        if content is None or graph is None:
            unevaluable.append((i, j))
            continue
        if content >= tau_hi and graph <= tau_lo:
            flagged.append(FlaggedPair(i, j, content, graph))
    return DiscrepancyReport(tuple(flagged), tuple(unevaluable))


def _normalized_mean(rows: np.ndarray, what: str) -> np.ndarray:
    mean = np.mean(np.asarray(rows, dtype=np.float64), axis=0)
    norm = np.linalg.norm(mean)
    if norm < 1e-12:
        raise UnimputableError(f"{what}: mean vector is numerically zero")
    return (mean / norm).astype(np.float32)


def impute_centroid(paper: int, graph: CitationGraph, emb: EmbeddingMatrix) -> np.ndarray:
    """Unit-norm mean of the paper's references' vectors (out-edges only).

    References exist at publication time even when citations do not, which
    is why in-links are not used. The paper's own vector must be missing.
    """
    if not emb.is_missing(paper):
        raise ValueError(f"paper {paper} already has a vector; refusing to overwrite")
    refs = [int(r) for r in graph.out_neighbors(paper) if not emb.is_missing(int(r))]
    if not refs:
        raise UnimputableError(f"paper {paper}: no references with vectors")
    return _normalized_mean(emb.data[refs], f"paper {paper}")


def impute_better_together(
    paper: int,
    donor_emb: EmbeddingMatrix,
    donor_index: AnnIndex,
    target_emb: EmbeddingMatrix,
    m: int = 10,
) -> np.ndarray:
    """Unit-norm mean of target-side vectors of the paper's donor-side neighbours.

    The two embeddings are "better together": a paper missing its content
    vector but present in the graph borrows the content vectors of its
    graph neighbours (or vice versa).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    if donor_emb.n != target_emb.n:
        raise ValueError("donor and target embeddings cover different corpora")
    if not target_emb.is_missing(paper):
        raise ValueError(f"paper {paper} already has a target vector; refusing to overwrite")
    if donor_emb.is_missing(paper):
        raise UnimputableError(f"paper {paper}: no donor vector to search with")
    hits = donor_index.query(donor_emb.data[paper], m + 1)
    neighbours = [nb.index for nb in hits if nb.index != paper][:m]
    usable = [i for i in neighbours if not target_emb.is_missing(i)]
    if not usable:
        raise UnimputableError(f"paper {paper}: none of {len(neighbours)} donor neighbours has a target vector")
    return _normalized_mean(target_emb.data[usable], f"paper {paper}")


@dataclass(frozen=True)
class ImputeReport:
    imputed: tuple[int, ...]
    unimputable: tuple[int, ...]


def impute_missing(
    target_emb: EmbeddingMatrix,
    strategy: str = "centroid",
    graph: CitationGraph | None = None,
    donor_emb: EmbeddingMatrix | None = None,
    donor_index: AnnIndex | None = None,
    m: int = 10,
    papers: Iterable[int] | None = None,
) -> tuple[EmbeddingMatrix, ImputeReport]:
    """Fill missing rows; returns the new matrix plus what was (un)imputable.

    All vectors are computed from the original matrices before any are
    applied, so the result does not depend on iteration order and imputed
    vectors never feed into other imputations. Coverage never decreases.
    """
    targets = sorted(target_emb.missing) if papers is None else sorted(set(papers))
    rows: dict[int, np.ndarray] = {}
    unimputable: list[int] = []
    for paper in targets:
        try:
            if strategy == "centroid":
                if graph is None:
                    raise ValueError("centroid strategy needs graph")
                rows[paper] = impute_centroid(paper, graph, target_emb)
            elif strategy == "better-together":
                if donor_emb is None or donor_index is None:
                    raise ValueError("better-together strategy needs donor_emb and donor_index")
                rows[paper] = impute_better_together(
                    paper, donor_emb, donor_index, target_emb, m
                )
            else:
                raise ValueError(f"unknown strategy {strategy!r}")
        except UnimputableError:
            unimputable.append(paper)
    new_emb = target_emb.with_rows(rows, imputed=True)
    logger.info(
        "impute_missing(%s): %d imputed, %d unimputable", strategy, len(rows), len(unimputable)
    )
    return new_emb, ImputeReport(tuple(sorted(rows)), tuple(unimputable))


def write_flag_report(
    target: str | Path | IO[str],
    store: CorpusStore,
    duplicates: Sequence[DuplicatePair] = (),
    discrepancies: Sequence[FlaggedPair] = (),
    unevaluable: Sequence[tuple[int, int]] = (),
) -> None:
    """Line-delimited JSON flag report: pair ids, cosines, reason code."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            write_flag_report(fh, store, duplicates, discrepancies, unevaluable)
        return

    def ids(i: int, j: int) -> list[str]:
        return [store.external_id(i), store.external_id(j)]

    for d in duplicates:
        target.write(
            json.dumps(
                {
                    "pair": ids(d.i, d.j),
                    "contentCosine": d.content_cosine,
                    "graphCosine": d.graph_cosine,
                    "reason": "duplicate",
                }
            )
            + "\n"
        )
    for f in discrepancies:
        target.write(
            json.dumps(
                {
                    "pair": ids(f.i, f.j),
                    "contentCosine": f.content_cosine,
                    "graphCosine": f.graph_cosine,
                    "reason": "discrepancy",
                }
            )
            + "\n"
        )
    for i, j in unevaluable:
        target.write(
            json.dumps(
                {"pair": ids(i, j), "contentCosine": None, "graphCosine": None, "reason": "unevaluable"}
            )
            + "\n"
        )
