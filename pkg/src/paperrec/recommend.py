"""User-facing recommendation: papers-like-this, authors-like-this, fusion.

A Recommender bundles the corpus with both embedding sides (content and
graph) and their ANN indexes. Hybrid answers are rank fusions of the two
sides, which is what gives the union coverage: a paper missing one vector is
still answerable through the other.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Mapping, Sequence

import numpy as np

from .annindex import AnnIndex
from .corpus import CorpusStore
from .embedding import EmbeddingMatrix

logger = logging.getLogger(__name__)

METHODS = ("cbf", "gb", "hybrid")
RRF_CONSTANT = 60.0


class MissingVectorError(LookupError):
    """The query paper has no vector on any requested side."""

    def __init__(self, query: int, sides: Sequence[str]):
        self.query = query
        self.sides = tuple(sides)
        super().__init__(f"paper {query} has no vector on side(s): {', '.join(self.sides)}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def _check_items(query, items) -> None:
    last = None
    seen = set()
    for idx, score in items:
        if idx == query:
            raise ValueError("query must not appear in items")
        if idx in seen:
            raise ValueError(f"duplicate item {idx}")
        seen.add(idx)
        key = (-score, idx)
        if last is not None and key < last:
            raise ValueError("items must be sorted by descending score, ascending index")
        last = key


@dataclass(frozen=True)
class RecommendationList:
    """Ranked paper items for one query."""

    query: int
    method: str
    items: tuple[tuple[int, float], ...]
    generated_at: str

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        _check_items(self.query, self.items)


@dataclass(frozen=True)
class AuthorRecommendationList:
    """Ranked author names for one query paper."""

    query: int
    method: str
    items: tuple[tuple[str, float], ...]
    generated_at: str


def _rrf_merge(lists: Sequence[Sequence], c: float) -> dict:
    scores: dict = {}
    for ranked in lists:
        for rank, (item, _score) in enumerate(ranked, start=1):
            scores[item] = scores.get(item, 0.0) + 1.0 / (c + rank)
    return scores


def _minmax(values: Sequence[float]) -> list[float]:
    if not values:
        return []
    lo = min(values)
    hi = max(values)
    if hi == lo:
        return [1.0] * len(values)
    return [(v - lo) / (hi - lo) for v in values]


def fuse(
    a: RecommendationList,
    b: RecommendationList,
    strategy: str = "rrf",
    k: int = 10,
    rrf_c: float = RRF_CONSTANT,
    weight: float = 0.5,
) -> RecommendationList:
    """Combine two ranked lists for the same query into a hybrid list.

    rrf scores each item by the sum of 1/(rrf_c + rank) over the lists it
    appears in (rank starts at 1). weighted-score min-max normalizes each
    list's scores and mixes them with ``weight`` on a. Self and duplicate
    suppression happens after fusion, before truncation to k.
    """
    if a.query != b.query:
        raise ValueError(f"query mismatch: {a.query} != {b.query}")
    if k < 1:
        raise ValueError("k must be >= 1")
    if strategy == "rrf":
        scores = _rrf_merge([a.items, b.items], rrf_c)
    elif strategy == "weighted":
        if not 0.0 <= weight <= 1.0:
            raise ValueError("weight must lie in [0, 1]")
        scores = {}
        for ranked, w in ((a.items, weight), (b.items, 1.0 - weight)):
            norm = _minmax([s for _, s in ranked])
            for (item, _), ns in zip(ranked, norm):
                scores[item] = scores.get(item, 0.0) + w * ns
    else:
        raise ValueError(f"unknown strategy {strategy!r}; use rrf or weighted")
    scores.pop(a.query, None)
    ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
    return RecommendationList(a.query, "hybrid", tuple(ordered), _now())


def _empty_list(query: int, method: str) -> RecommendationList:
    return RecommendationList(query, method, (), _now())


class Recommender:
    """Read-only query surface over a corpus plus both embedding sides."""

    def __init__(
        self,
        store: CorpusStore,
        cbf_emb: EmbeddingMatrix,
        cbf_index: AnnIndex,
        gb_emb: EmbeddingMatrix,
        gb_index: AnnIndex,
    ):
        for emb, name in ((cbf_emb, "cbf"), (gb_emb, "gb")):
            if emb.n != store.n:
                raise ValueError(f"{name} embedding has {emb.n} rows, corpus has {store.n}")
        self.store = store
        self.cbf_emb = cbf_emb
        self.cbf_index = cbf_index
        self.gb_emb = gb_emb
        self.gb_index = gb_index
        self._author_cache: dict[str, tuple[list[str], EmbeddingMatrix, AnnIndex]] = {}

    def _side(self, method: str) -> tuple[EmbeddingMatrix, AnnIndex]:
        if method == "cbf":
            return self.cbf_emb, self.cbf_index
        if method == "gb":
            return self.gb_emb, self.gb_index
        raise ValueError(f"unknown method {method!r}")

    def _side_list(self, query: int, method: str, k: int, ef_search: int) -> RecommendationList:
        emb, index = self._side(method)
        vec = emb.data[query]
        hits = index.query(vec, k + 1, ef_search)
        items = tuple((nb.index, nb.cosine) for nb in hits if nb.index != query)[:k]
        return RecommendationList(query, method, items, _now())

    def answerable(self, method: str) -> np.ndarray:
        """Sorted indices of papers this method can answer queries for."""
        if method == "hybrid":
            both = np.union1d(self.answerable("cbf"), self.answerable("gb"))
            return both.astype(np.int64)
        emb, _ = self._side(method)
        return emb.present_indices().astype(np.int64)

    def papers_like_this(
        self, query: int, method: str = "hybrid", k: int = 10, ef_search: int = 100
    ) -> RecommendationList:
        """Nearest papers to the query paper under the chosen method.

        Hybrid fuses whichever sides have a vector for the query; a query
        with no vector anywhere raises MissingVectorError naming the sides.
        """
        if not 0 <= query < self.store.n:
            raise IndexError(f"query {query} out of range [0, {self.store.n})")
        if k < 1:
            raise ValueError("k must be >= 1")
        if method in ("cbf", "gb"):
            emb, _ = self._side(method)
            if emb.is_missing(query):
                raise MissingVectorError(query, [method])
            return self._side_list(query, method, k, ef_search)
        if method != "hybrid":
            raise ValueError(f"unknown method {method!r}")
        missing_sides = [m for m in ("cbf", "gb") if self._side(m)[0].is_missing(query)]
        if len(missing_sides) == 2:
            raise MissingVectorError(query, missing_sides)
        side_lists = {
            m: (
                self._side_list(query, m, k, ef_search)
                if m not in missing_sides
                else _empty_list(query, m)
            )
            for m in ("cbf", "gb")
        }
        return fuse(side_lists["cbf"], side_lists["gb"], "rrf", k)

    # -- authors -------------------------------------------------------------

    def _author_table(self, method: str) -> tuple[list[str], EmbeddingMatrix, AnnIndex]:
        """Author centroid vectors for one side, built once and cached."""
        cached = self._author_cache.get(method)
        if cached is not None:
            return cached
        emb, _ = self._side(method)
        papers_of: dict[str, list[int]] = {}
        for i, rec in enumerate(self.store):
            for author in rec.authors:
                papers_of.setdefault(author, []).append(i)
        names: list[str] = []
        rows: list[np.ndarray] = []
        for author in sorted(papers_of):
            vecs = [emb.data[i] for i in papers_of[author] if not emb.is_missing(i)]
            if not vecs:
                continue  # author with zero embedded papers: not a candidate
            mean = np.mean(np.asarray(vecs, dtype=np.float64), axis=0)
            norm = np.linalg.norm(mean)
            if norm < 1e-12:
                continue
            names.append(author)
            rows.append((mean / norm).astype(np.float32))
        if not names:
            raise ValueError(f"no author vectors computable on side {method}")
        author_emb = EmbeddingMatrix(np.asarray(rows), method=emb.method)
        from .annindex import build_index

        table = (names, author_emb, build_index(author_emb))
        self._author_cache[method] = table
        logger.info("author table (%s): %d authors", method, len(names))
        return table

    def _author_side_list(
        self, query: int, method: str, k: int, ef_search: int
    ) -> tuple[tuple[str, float], ...]:
        emb, _ = self._side(method)
        names, _author_emb, author_index = self._author_table(method)
        exclude = set(self.store[query].authors)
        hits = author_index.query(emb.data[query], k + len(exclude), ef_search)
        items = [
            (names[nb.index], nb.cosine) for nb in hits if names[nb.index] not in exclude
        ]
        # Re-sort by (-score, name) so ties break on the author string, not
        # on internal row order.
        items.sort(key=lambda kv: (-kv[1], kv[0]))
        return tuple(items[:k])

    def authors_like_this(
        self, query: int, k: int = 10, method: str = "cbf", ef_search: int = 100
    ) -> AuthorRecommendationList:
        """Authors whose paper centroids are nearest the query paper.

        An author's vector is the L2-normalized mean of their papers'
        non-missing vectors on the chosen side; authors with no embedded
        papers are not candidates; the query's own authors are excluded.
        """
        if not 0 <= query < self.store.n:
            raise IndexError(f"query {query} out of range [0, {self.store.n})")
        if k < 1:
            raise ValueError("k must be >= 1")
        if method in ("cbf", "gb"):
            emb, _ = self._side(method)
            if emb.is_missing(query):
                raise MissingVectorError(query, [method])
            items = self._author_side_list(query, method, k, ef_search)
            return AuthorRecommendationList(query, method, items, _now())
        if method != "hybrid":
            raise ValueError(f"unknown method {method!r}")
        missing_sides = [m for m in ("cbf", "gb") if self._side(m)[0].is_missing(query)]
        if len(missing_sides) == 2:
            raise MissingVectorError(query, missing_sides)
        side_items = [
            self._author_side_list(query, m, k, ef_search)
            for m in ("cbf", "gb")
            if m not in missing_sides
        ]
        scores = _rrf_merge(side_items, RRF_CONSTANT)
        ordered = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k]
        return AuthorRecommendationList(query, "hybrid", tuple(ordered), _now())


# -- priors profiling ---------------------------------------------------------


@dataclass(frozen=True)
class SummaryStats:
    """min/median/mean/max over one numeric field; None when empty."""

    n: int
    minimum: float | None
    median: float | None
    mean: float | None
    maximum: float | None

    @classmethod
    def of(cls, values: Sequence[float]) -> "SummaryStats":
        if not values:
            return cls(0, None, None, None, None)
        arr = np.asarray(values, dtype=np.float64)
        return cls(
            len(values),
            float(arr.min()),
            float(np.median(arr)),
            float(arr.mean()),
            float(arr.max()),
        )

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "min": self.minimum,
            "median": self.median,
            "mean": self.mean,
            "max": self.maximum,
        }


@dataclass(frozen=True)
class MethodPriors:
    citations: SummaryStats
    years: SummaryStats
    n_items: int
    n_year_unknown: int

    def to_json_dict(self) -> dict:
        return {
            "citations": self.citations.to_json_dict(),
            "years": self.years.to_json_dict(),
            "nItems": self.n_items,
            "nYearUnknown": self.n_year_unknown,
        }


@dataclass(frozen=True)
class PriorsReport:
    """Citation-count and recency profile of each method's top-k items."""

    per_method: Mapping[str, MethodPriors]

    def to_json_dict(self) -> dict:
        return {m: p.to_json_dict() for m, p in self.per_method.items()}


def priors_profile(
    lists: Mapping[str, Sequence[RecommendationList]], store: CorpusStore, k: int = 10
) -> PriorsReport:
    """Summarize what each method recommends: how cited, how recent.

    Items beyond rank k are ignored. Papers with unknown year are excluded
    from the year summary and counted.
    """
    if not lists or any(len(v) == 0 for v in lists.values()):
        raise ValueError("lists must contain at least one RecommendationList per method")
    per_method: dict[str, MethodPriors] = {}
    for method, recs in lists.items():
        citations: list[float] = []
        years: list[float] = []
        n_items = 0
        n_year_unknown = 0
        for rec_list in recs:
            for idx, _score in rec_list.items[:k]:
                rec = store[idx]
                n_items += 1
                citations.append(float(rec.citation_count))
                if rec.year is None:
                    n_year_unknown += 1
                else:
                    years.append(float(rec.year))
        per_method[method] = MethodPriors(
            SummaryStats.of(citations), SummaryStats.of(years), n_items, n_year_unknown
        )
    return PriorsReport(per_method)


def priors_csv(
    lists: Mapping[str, Sequence[RecommendationList]], store: CorpusStore, k: int = 10
) -> str:
    """Plot-ready CSV of every top-k item: method,rank,paper_id,citations,year."""
    rows = ["method,rank,paper_id,citations,year"]
    for method in sorted(lists):
        for rec_list in lists[method]:
            for rank, (idx, _score) in enumerate(rec_list.items[:k], start=1):
                rec = store[idx]
                year = "" if rec.year is None else str(rec.year)
                rows.append(f"{method},{rank},{rec.external_id},{rec.citation_count},{year}")
    return "\n".join(rows) + "\n"


def items_payload(store: CorpusStore, rec_list: RecommendationList) -> list[dict]:
    """JSON-ready item objects; the single source for CLI and service output."""
    out = []
    for idx, score in rec_list.items:
        rec = store[idx]
        out.append(
            {
                "paperId": rec.external_id,
                "title": rec.title,
                "score": score,
                "citationCount": rec.citation_count,
            }
        )
    return out
