"""Paper corpus: JSONL parsing, integer id assignment, coverage statistics.

Records arrive as JSON Lines with fields ``id``, ``title``, ``abstract``,
``year``, ``references``, ``citationCount``, ``authors``. External ids are
opaque strings; every downstream structure works on dense integer indices
assigned in first-seen order, and ``id_map.tsv`` is the only bridge back.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Iterator, Mapping, Sequence

logger = logging.getLogger(__name__)

# Fraction of malformed lines above which parsing aborts instead of skipping.
MALFORMED_LIMIT = 0.10


class CorpusError(ValueError):
    """Raised when an input stream is too broken to produce a corpus."""


@dataclass(frozen=True)
class PaperRecord:
    """One paper. Immutable; references never include the paper itself."""

    external_id: str
    title: str = ""
    abstract: str | None = None
    year: int | None = None
    references: tuple[str, ...] = ()
    citation_count: int = 0
    authors: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.external_id:
            raise ValueError("external_id must be a non-empty string")
        if self.citation_count < 0:
            raise ValueError("citation_count must be >= 0")
        if self.external_id in self.references:
            raise ValueError("references must not include the record itself")

    @property
    def has_abstract(self) -> bool:
        return self.abstract is not None and len(self.abstract) > 0

    def to_json_dict(self) -> dict:
        """Round-trippable dict in the input schema (camelCase keys)."""
        return {
            "id": self.external_id,
            "title": self.title,
            "abstract": self.abstract,
            "year": self.year,
            "references": list(self.references),
            "citationCount": self.citation_count,
            "authors": list(self.authors),
        }


@dataclass(frozen=True)
class ParseIssue:
    """One rejected or deduplicated input line."""

    line_no: int
    reason: str
    external_id: str | None = None


@dataclass
class ParseReport:
    """What parse_records skipped and why."""

    n_lines: int = 0
    n_parsed: int = 0
    malformed: list[ParseIssue] = field(default_factory=list)
    duplicates: list[ParseIssue] = field(default_factory=list)

    @property
    def n_errors(self) -> int:
        return len(self.malformed) + len(self.duplicates)

    def to_json_dict(self) -> dict:
        return {
            "nLines": self.n_lines,
            "nParsed": self.n_parsed,
            "malformed": [
                {"line": e.line_no, "reason": e.reason, "id": e.external_id}
                for e in self.malformed
            ],
            "duplicates": [
                {"line": e.line_no, "reason": e.reason, "id": e.external_id}
                for e in self.duplicates
            ],
        }


class CorpusStore:
    """Immutable ordered collection of records with an id -> index map.

    Indices are dense, 0-based, and assigned in insertion order; they are the
    node ids of the citation graph and the row ids of every embedding matrix.
    """

    def __init__(self, records: Iterable[PaperRecord]):
        self._records: tuple[PaperRecord, ...] = tuple(records)
        self._index: dict[str, int] = {}
        for i, rec in enumerate(self._records):
            if rec.external_id in self._index:
                raise CorpusError(f"duplicate external id {rec.external_id!r}")
            self._index[rec.external_id] = i

    def __len__(self) -> int:
        return len(self._records)

    def __iter__(self) -> Iterator[PaperRecord]:
        return iter(self._records)

    def __getitem__(self, index: int) -> PaperRecord:
        return self._records[index]

    @property
    def n(self) -> int:
        return len(self._records)

    def __contains__(self, external_id: str) -> bool:
        return external_id in self._index

    def index_of(self, external_id: str) -> int:
        """Index for an external id; KeyError if unknown."""
        return self._index[external_id]

    def resolve(self, external_id: str) -> int | None:
        """Index for an external id, or None if unknown."""
        return self._index.get(external_id)

    def external_id(self, index: int) -> str:
        return self._records[index].external_id


def _check_str(value, field_name: str) -> str:
    if not isinstance(value, str):
        raise ValueError(f"{field_name} must be a string")
    return value


def _check_opt_int(value, field_name: str) -> int | None:
    if value is None:
        return None
    # bool is an int subclass; reject it explicitly.
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValueError(f"{field_name} must be an integer or null")
    return value


def _record_from_json(obj) -> PaperRecord:
    if not isinstance(obj, Mapping):
        raise ValueError("line is not a JSON object")
    ext = obj.get("id")
    if not isinstance(ext, str) or not ext:
        raise ValueError("id must be a non-empty string")
    title = _check_str(obj.get("title", ""), "title")
    abstract = obj.get("abstract")
    if abstract is not None:
        abstract = _check_str(abstract, "abstract")
    year = _check_opt_int(obj.get("year"), "year")
    refs = obj.get("references", [])
    if not isinstance(refs, Sequence) or isinstance(refs, str):
        raise ValueError("references must be an array of strings")
    refs = tuple(_check_str(r, "reference") for r in refs)
    cites = obj.get("citationCount", 0)
    if isinstance(cites, bool) or not isinstance(cites, int) or cites < 0:
        raise ValueError("citationCount must be a non-negative integer")
    authors = obj.get("authors", [])
    if not isinstance(authors, Sequence) or isinstance(authors, str):
        raise ValueError("authors must be an array of strings")
    authors = tuple(_check_str(a, "author") for a in authors)
    # Normalization: drop self-references, keep order, drop exact repeats.
    seen: set[str] = set()
    clean: list[str] = []
    for r in refs:
        if r != ext and r not in seen:
            seen.add(r)
            clean.append(r)
    return PaperRecord(
        external_id=ext,
        title=title,
        abstract=abstract,
        year=year,
        references=tuple(clean),
        citation_count=cites,
        authors=authors,
    )


def parse_records(source: Iterable[str] | str | Path | IO[str]) -> tuple[CorpusStore, ParseReport]:
    """Parse JSONL into a CorpusStore plus a report of skipped lines.

    Malformed lines and duplicate ids are recorded, not fatal; the first
    occurrence of an id wins. Parsing aborts with CorpusError only when more
    than 10% of non-blank lines are malformed.
    """
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return parse_records(fh)

    report = ParseReport()
    records: list[PaperRecord] = []
    index: dict[str, int] = {}
    for line_no, line in enumerate(source, start=1):
        stripped = line.strip()
        if not stripped:
            continue
        report.n_lines += 1
        try:
            obj = json.loads(stripped)
            rec = _record_from_json(obj)
        except (json.JSONDecodeError, ValueError) as exc:
            report.malformed.append(ParseIssue(line_no, str(exc)))
            continue
        if rec.external_id in index:
            report.duplicates.append(
                ParseIssue(line_no, "duplicate id, first occurrence kept", rec.external_id)
            )
            continue
        index[rec.external_id] = len(records)
        records.append(rec)

    if report.n_lines and len(report.malformed) > MALFORMED_LIMIT * report.n_lines:
        raise CorpusError(
            f"{len(report.malformed)} of {report.n_lines} lines malformed "
            f"(limit {MALFORMED_LIMIT:.0%}); first: line "
            f"{report.malformed[0].line_no}: {report.malformed[0].reason}"
        )
    report.n_parsed = len(records)
    if report.n_errors:
        logger.info("parsed %d records, skipped %d lines", report.n_parsed, report.n_errors)
    return CorpusStore(records), report


def serialize_records(store: CorpusStore) -> Iterator[str]:
    """Yield one JSON line per record, in index order, in the input schema."""
    for rec in store:
        yield json.dumps(rec.to_json_dict(), ensure_ascii=False, sort_keys=False)


def write_records(store: CorpusStore, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for line in serialize_records(store):
            fh.write(line + "\n")


def export_id_map(store: CorpusStore, target: str | Path | IO[str]) -> None:
    """Write the index<TAB>external_id table (one row per paper, index order)."""
    if isinstance(target, (str, Path)):
        with open(target, "w", encoding="utf-8") as fh:
            export_id_map(store, fh)
        return
    for i in range(store.n):
        target.write(f"{i}\t{store.external_id(i)}\n")


def read_id_map(source: str | Path | IO[str]) -> dict[int, str]:
    if isinstance(source, (str, Path)):
        with open(source, "r", encoding="utf-8") as fh:
            return read_id_map(fh)
    out: dict[int, str] = {}
    for line in source:
        line = line.rstrip("\n")
        if not line:
            continue
        idx, ext = line.split("\t", 1)
        out[int(idx)] = ext
    return out


@dataclass(frozen=True)
class CoverageStats:
    """How much of the corpus each embedding family can see.

    n_abstract counts papers with a non-empty abstract (content side),
    n_linked counts papers with at least one in- or out-citation (graph
    side), n_both the intersection.
    """

    n_total: int
    n_abstract: int
    n_linked: int
    n_both: int

    @property
    def fraction_abstract(self) -> float:
        return self.n_abstract / self.n_total if self.n_total else 0.0

    @property
    def fraction_linked(self) -> float:
        return self.n_linked / self.n_total if self.n_total else 0.0

    @property
    def fraction_both(self) -> float:
        return self.n_both / self.n_total if self.n_total else 0.0

    def to_json_dict(self) -> dict:
        return {
            "nTotal": self.n_total,
            "nAbstract": self.n_abstract,
            "nLinked": self.n_linked,
            "nBoth": self.n_both,
            "fractionAbstract": self.fraction_abstract,
            "fractionLinked": self.fraction_linked,
            "fractionBoth": self.fraction_both,
        }


def coverage_stats(store: CorpusStore, graph) -> CoverageStats:
    """Count abstract/link coverage; graph is a citegraph.CitationGraph."""
    if graph.n != store.n:
        raise ValueError(f"graph has {graph.n} nodes, store has {store.n}")
    n_abstract = 0
    n_linked = 0
    n_both = 0
    for i, rec in enumerate(store):
        has_a = rec.has_abstract
        has_l = graph.degree(i) > 0
        n_abstract += has_a
        n_linked += has_l
        n_both += has_a and has_l
    return CoverageStats(store.n, n_abstract, n_linked, n_both)


@dataclass(frozen=True)
class FetchFailure:
    external_id: str
    reason: str
    permanent: bool


@dataclass
class FetchResult:
    """Raw record dicts (input schema) plus per-id failures."""

    records: list[dict]
    failures: list[FetchFailure]


def _is_permanent(status: int) -> bool:
    # 429 is rate limiting, worth retrying; other 4xx will not improve.
    return 400 <= status < 500 and status != 429


def fetch_records(
    endpoint: str,
    external_ids: Sequence[str],
    *,
    max_attempts: int = 3,
    backoff: float = 0.5,
    timeout: float = 10.0,
    session=None,
) -> FetchResult:
    """Fetch record JSON for each id from ``{endpoint}/{id}``.

    Transient failures (connection errors, 429, 5xx) are retried up to
    max_attempts with exponential backoff; permanent failures (other 4xx,
    undecodable bodies) are not. Failures never abort the batch.
    """
    import requests

    if max_attempts < 1:
        raise ValueError("max_attempts must be >= 1")
    own_session = session is None
    if own_session:
        session = requests.Session()
    base = endpoint.rstrip("/")
    result = FetchResult(records=[], failures=[])
    try:
        for ext in external_ids:
            reason = "unknown"
            permanent = False
            for attempt in range(max_attempts):
                if attempt:
                    time.sleep(backoff * (2 ** (attempt - 1)))
                try:
                    resp = session.get(f"{base}/{ext}", timeout=timeout)
                except requests.RequestException as exc:
                    reason = f"request failed: {exc}"
                    permanent = False
                    continue
                if resp.status_code != 200:
                    reason = f"HTTP {resp.status_code}"
                    permanent = _is_permanent(resp.status_code)
                    if permanent:
                        break
                    continue
                try:
                    obj = resp.json()
                    _record_from_json(obj)
                except ValueError as exc:
                    reason = f"bad record body: {exc}"
                    permanent = True
                    break
                result.records.append(obj)
                break
            else:
                result.failures.append(FetchFailure(ext, reason, permanent))
                continue
            if permanent:
                result.failures.append(FetchFailure(ext, reason, permanent))
    finally:
        if own_session:
            session.close()
    if result.failures:
        logger.warning("fetch: %d of %d ids failed", len(result.failures), len(external_ids))
    return result
