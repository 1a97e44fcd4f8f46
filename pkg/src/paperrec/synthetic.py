"""Seeded synthetic corpora and graphs for tests, demos, and calibration.

Three generators. tiny5 is a five-paper fixture small enough to reason about
by hand. make_preferential_attachment_graph grows a bare citation graph with
degree-proportional attachment (heavy-tailed in-degrees, like real citation
counts). make_citation_corpus adds text: topic and era token pools with
drifting vocabulary, topic-affine attachment, years monotone in index, and
citationCount equal to realized in-degree.
"""

from __future__ import annotations

import bisect

import numpy as np

from .citegraph import CitationGraph, from_edges
from .corpus import CorpusStore, PaperRecord


def tiny5() -> CorpusStore:
    """Five papers, four edges; the hand-checkable fixture used across tests.

    P0 has links but no abstract, P4 has an abstract but no links, P1-P3
    have both. Content coverage and graph coverage overlap on exactly three
    papers (fraction 0.60).
    """
    return CorpusStore(
        [
            PaperRecord("P0", title="alpha", abstract=None, year=2000, references=(), citation_count=2),
            PaperRecord("P1", title="beta", abstract="graph embedding", year=2005, references=("P0",), citation_count=1),
            PaperRecord("P2", title="gamma", abstract="graph embedding survey", year=2010, references=("P0", "P1"), citation_count=1),
            PaperRecord("P3", title="delta", abstract="content filtering", year=2015, references=("P2",), citation_count=0),
            PaperRecord("P4", title="epsilon", abstract="unrelated topic", year=2020, references=(), citation_count=0),
        ]
    )


def make_preferential_attachment_graph(
    n: int, m: int = 5, seed: int = 0, uniform_mix: float = 0.2
) -> CitationGraph:
    """Directed PA graph: node i cites up to m earlier nodes.

    Targets are drawn degree-proportionally from an endpoint list, mixed
    with a uniform_mix share of uniform draws so early nodes do not absorb
    everything. O(edges), fine at 10^5 nodes.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if m < 1:
        raise ValueError("m must be >= 1")
    rng = np.random.default_rng(seed)
    endpoints: list[int] = []
    edges: list[tuple[int, int]] = []
    for i in range(1, n):
        want = min(m, i)
        targets: set[int] = set()
        attempts = 0
        while len(targets) < want and attempts < 50 * want:
            attempts += 1
            if not endpoints or rng.random() < uniform_mix:
                t = int(rng.integers(0, i))
            else:
                t = endpoints[int(rng.integers(0, len(endpoints)))]
            if t != i:
                targets.add(t)
        for t in sorted(targets):
            edges.append((i, t))
            endpoints.append(i)
            endpoints.append(t)
    return from_edges(n, edges)


def store_for_graph(graph: CitationGraph, prefix: str = "n") -> CorpusStore:
    """Minimal corpus wrapping a bare graph (ids, no abstracts).

    References mirror the graph's out-edges and citationCount its in-degree,
    so build_graph on the result reproduces the input graph.
    """
    records = []
    for i in range(graph.n):
        refs = tuple(f"{prefix}{int(j)}" for j in graph.out_neighbors(i))
        records.append(
            PaperRecord(
                f"{prefix}{i}",
                title=f"node {i}",
                references=refs,
                citation_count=graph.in_degree(i),
            )
        )
    return CorpusStore(records)


def make_citation_corpus(
    n: int,
    refs_per_paper: int = 4,
    n_topics: int = 8,
    n_eras: int = 10,
    seed: int = 0,
    affinity: float = 6.0,
    topic_vocab: int = 40,
    era_vocab: int = 30,
    shared_vocab: int = 80,
    doc_len: int = 80,
    year_range: tuple[int, int] = (1970, 2019),
    abstract_missing: float = 0.0,
    authors_per_paper: int = 2,
    recency: float = 0.0,
    recency_window: int = 0,
) -> CorpusStore:
    """Topic-and-time structured corpus with text, links, years, authors.

    Citations use preferential attachment boosted by a factor (1 + affinity)
    toward same-topic targets, so graph neighbourhoods align with topics.
    Abstracts draw half their tokens from the paper's topic pool, a quarter
    from its era pool (vocabulary drift over time), a quarter from a shared
    pool. Years increase monotonically with index; citationCount is the
    realized in-degree. abstract_missing removes that fraction of abstracts
    (seeded), leaving those papers graph-only.

    recency > 0 adds citation aging: each reference draw is, with that
    probability, uniform over same-topic papers inside the recency_window
    most recent instead of the preferential draw (falling back to the
    preferential draw when the window holds no same-topic paper).
    Forecasting past the training cut then genuinely loses the most
    informative edges, which is what horizon sweeps measure.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0.0 <= abstract_missing < 1.0:
        raise ValueError("abstract_missing must be in [0, 1)")
    if not 0.0 <= recency < 1.0:
        raise ValueError("recency must be in [0, 1)")
    if recency > 0.0 and recency_window < 1:
        raise ValueError("recency_window must be >= 1 when recency is set")
    rng = np.random.default_rng(seed)
    topics = rng.integers(0, n_topics, size=n)
    eras = (np.arange(n) * n_eras) // n
    year_lo, year_hi = year_range
    years = year_lo + (np.arange(n) * (year_hi - year_lo + 1)) // n

    topic_pools = [[f"t{z}w{j}" for j in range(topic_vocab)] for z in range(n_topics)]
    era_pools = [[f"e{z}w{j}" for j in range(era_vocab)] for z in range(n_eras)]
    shared_pool = [f"cw{j}" for j in range(shared_vocab)]
    author_pools = [
        [f"author t{z} {j}" for j in range(max(2, n // (n_topics * 20)))]
        for z in range(n_topics)
    ]

    # Degree-proportional draws via endpoint lists; the same-topic boost is a
    # mixture: choose the same-topic list with probability proportional to
    # affinity * (its mass), which realizes weights (deg+1) * (1 + affinity
    # for same topic) exactly.
    all_list: list[int] = []
    topic_lists: list[list[int]] = [[] for _ in range(n_topics)]
    topic_members: list[list[int]] = [[] for _ in range(n_topics)]
    in_deg = np.zeros(n, dtype=np.int64)
    missing_abstract = rng.random(n) < abstract_missing

    records: list[PaperRecord] = []
    for i in range(n):
        z = int(topics[i])
        want = min(refs_per_paper, i)
        targets: set[int] = set()
        attempts = 0
        same = topic_lists[z]
        members = topic_members[z]
        while len(targets) < want and attempts < 60 * want:
            attempts += 1
            t = -1
            if recency > 0.0 and rng.random() < recency:
                # Members are appended in index order, so the window is a
                # suffix of the same-topic member list.
                lo = bisect.bisect_left(members, i - recency_window)
                if lo < len(members):
                    t = members[lo + int(rng.integers(0, len(members) - lo))]
            if t < 0:
                w_all = len(all_list)
                w_same = affinity * len(same)
                if w_all + w_same <= 0 or rng.random() * (w_all + w_same) < w_all:
                    t = all_list[int(rng.integers(0, w_all))] if w_all else int(rng.integers(0, i))
                else:
                    t = same[int(rng.integers(0, len(same)))]
            if t != i:
                targets.add(int(t))
        refs = sorted(targets)
        for t in refs:
            in_deg[t] += 1

        n_topic_tok = doc_len // 2
        n_era_tok = doc_len // 4
        n_shared_tok = doc_len - n_topic_tok - n_era_tok
        words = (
            [topic_pools[z][int(j)] for j in rng.integers(0, topic_vocab, n_topic_tok)]
            + [era_pools[int(eras[i])][int(j)] for j in rng.integers(0, era_vocab, n_era_tok)]
            + [shared_pool[int(j)] for j in rng.integers(0, shared_vocab, n_shared_tok)]
        )
        title_words = [topic_pools[z][int(j)] for j in rng.integers(0, topic_vocab, 3)]
        pool = author_pools[z]
        author_idx = rng.choice(len(pool), size=min(authors_per_paper, len(pool)), replace=False)
        records.append(
            PaperRecord(
                external_id=f"S{i}",
                title=" ".join(title_words),
                abstract=None if missing_abstract[i] else " ".join(words),
                year=int(years[i]),
                references=tuple(f"S{t}" for t in refs),
                citation_count=0,  # filled below once in-degrees are final
                authors=tuple(pool[int(a)] for a in sorted(author_idx)),
            )
        )
        # Endpoint bookkeeping: +1 smoothing is realized by seeding each
        # node once at creation time.
        all_list.append(i)
        topic_lists[z].append(i)
        members.append(i)
        for t in refs:
            all_list.extend((i, t))
            topic_lists[z].append(i)
            topic_lists[int(topics[t])].append(t)

    final = [
        PaperRecord(
            external_id=r.external_id,
            title=r.title,
            abstract=r.abstract,
            year=r.year,
            references=r.references,
            citation_count=int(in_deg[i]),
            authors=r.authors,
        )
        for i, r in enumerate(records)
    ]
    return CorpusStore(final)


def inject_duplicates(
    store: CorpusStore, n_pairs: int, seed: int = 0, ref_count: int = 2
) -> tuple[CorpusStore, list[tuple[str, str]]]:
    """Append near-exact duplicate records and return the planted pairs.

    Each duplicate copies an original's title/abstract/year/authors but gets
    fresh references (disjoint from the original's) and zero citations, so
    the original keeps all graph signal: content cosine 1.0, graph vectors
    unrelated. Originals are sampled among cited papers with abstracts.
    """
    if n_pairs < 1:
        raise ValueError("n_pairs must be >= 1")
    rng = np.random.default_rng(seed)
    candidates = [
        i
        for i, rec in enumerate(store)
        if rec.has_abstract and rec.citation_count >= 1
    ]
    if len(candidates) < n_pairs:
        raise ValueError(
            f"corpus has only {len(candidates)} eligible originals, need {n_pairs}"
        )
    chosen = rng.choice(len(candidates), size=n_pairs, replace=False)
    originals = [candidates[int(c)] for c in sorted(chosen)]
    records = list(store)
    pairs: list[tuple[str, str]] = []
    for orig_idx in originals:
        orig = store[orig_idx]
        banned = {orig.external_id} | set(orig.references)
        refs: set[str] = set()
        while len(refs) < min(ref_count, store.n - len(banned)):
            t = store.external_id(int(rng.integers(0, store.n)))
            if t not in banned:
                refs.add(t)
        dup_id = f"{orig.external_id}-dup"
        records.append(
            PaperRecord(
                external_id=dup_id,
                title=orig.title,
                abstract=orig.abstract,
                year=orig.year,
                references=tuple(sorted(refs)),
                citation_count=0,
                authors=orig.authors,
            )
        )
        pairs.append((orig.external_id, dup_id))
    return CorpusStore(records), pairs
