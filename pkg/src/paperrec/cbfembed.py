"""Content-based embeddings: seeded feature hashing of title + abstract text.

A deliberately simple stand-in for a learned text encoder with the same
interface contract: unit-norm float32 vectors, deterministic for a given
seed, missing where there is no usable text. Tokens are lowercased ASCII
alphanumeric runs; unigrams and bigrams are hashed into signed buckets with
keyed blake2b so results are stable across processes and platforms.
"""

from __future__ import annotations

import hashlib
import logging
import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable

import numpy as np

from .corpus import CorpusStore
from .embedding import EmbeddingMatrix, load_embedding

logger = logging.getLogger(__name__)

_TOKEN_RE = re.compile(r"[a-z0-9]+")


@dataclass(frozen=True)
class HashEmbedderConfig:
    """Feature-hashing knobs.

    d       number of hash buckets (vector dimension), >= 8
    ngram   inclusive n-gram order range, default unigrams and bigrams
    seed    key for the hash; different seeds give unrelated spaces
    """

    d: int = 256
    ngram: tuple[int, int] = (1, 2)
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 8:
            raise ValueError("d must be >= 8")
        lo, hi = self.ngram
        if lo < 1 or hi < lo:
            raise ValueError("ngram must be (lo, hi) with 1 <= lo <= hi")


def tokenize(text: str) -> list[str]:
    """Lowercased ASCII alphanumeric runs; everything else is a separator."""
    return _TOKEN_RE.findall(text.lower())


def _grams(tokens: list[str], lo: int, hi: int) -> Iterable[str]:
    for order in range(lo, hi + 1):
        if order == 1:
            yield from tokens
        else:
            for i in range(len(tokens) - order + 1):
                yield " ".join(tokens[i : i + order])


def hash_embed(text: str, config: HashEmbedderConfig = HashEmbedderConfig()) -> np.ndarray | None:
    """Hash text into a unit-norm float32 vector, or None when no tokens.

    Each n-gram lands in bucket blake2b(gram, key=seed) mod d with a hash-
    derived sign; counts accumulate and the result is L2-normalized. None
    marks a missing vector (empty or non-ASCII-alphanumeric text).
    """
    tokens = tokenize(text)
    if not tokens:
        return None
    key = int(config.seed).to_bytes(8, "little", signed=True)
    acc = np.zeros(config.d, dtype=np.float64)
    for gram in _grams(tokens, *config.ngram):
        h = hashlib.blake2b(gram.encode("utf-8"), key=key, digest_size=16).digest()
        bucket = int.from_bytes(h[:8], "little") % config.d
        sign = 1.0 if h[8] & 1 else -1.0
        acc[bucket] += sign
    norm = np.linalg.norm(acc)
    if norm < 1e-12:
        # Possible only when signed counts cancel exactly in every bucket.
        return None
    return (acc / norm).astype(np.float32)


def embed_corpus(
    store: CorpusStore, config: HashEmbedderConfig = HashEmbedderConfig()
) -> EmbeddingMatrix:
    """Embed every paper that has an abstract; the rest are missing rows.

    The embedded text is title + " " + abstract. A paper whose abstract field
    is absent has no content signal and joins the missing set even if it has
    a title; a present-but-empty abstract still counts as content, so such a
    paper embeds from its title alone.
    """
    data = np.zeros((store.n, config.d), dtype=np.float32)
    missing: set[int] = set()
    for i, rec in enumerate(store):
        if rec.abstract is None:
            missing.add(i)
            continue
        vec = hash_embed(rec.title + " " + rec.abstract, config)
        if vec is None:
            missing.add(i)
        else:
            data[i] = vec
    if missing:
        logger.info("embed_corpus: %d of %d rows missing", len(missing), store.n)
    return EmbeddingMatrix(data=data, method="cbf", missing=frozenset(missing))


def load_vectors(
    source: str | Path | IO, store: CorpusStore
) -> tuple[EmbeddingMatrix, list[str]]:
    """Load external content vectors, binary or text, aligned to the corpus.

    Binary files are the standard embedding format and must already be
    corpus-aligned (row count equal to the corpus). Text files carry one
    ``external_id<TAB>f32,f32,...`` row per paper; ids not in the corpus are
    skipped and returned in the second element, papers without a row become
    missing. Inconsistent dimensions are an error.
    """
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            head = fh.read(4)
        if head == b"EMB1":
            emb = load_embedding(source)
            if emb.n != store.n:
                raise ValueError(
                    f"embedding has {emb.n} rows but corpus has {store.n} papers"
                )
            return emb, []
        with open(source, "r", encoding="utf-8") as fh:
            return load_vectors(fh, store)

    unresolved: list[str] = []
    rows: dict[int, np.ndarray] = {}
    dim: int | None = None
    for line_no, line in enumerate(source, start=1):
        line = line.rstrip("\n")
        if not line:
            continue
        try:
            ext, payload = line.split("\t", 1)
            vec = np.asarray([float(v) for v in payload.split(",")], dtype=np.float32)
        except ValueError as exc:
            raise ValueError(f"bad vector line {line_no}: {exc}") from exc
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise ValueError(
                f"line {line_no}: dimension {len(vec)} differs from first row ({dim})"
            )
        idx = store.resolve(ext)
        if idx is None:
            unresolved.append(ext)
            continue
        rows[idx] = vec
    if dim is None:
        raise ValueError("no vector rows found")
    data = np.zeros((store.n, dim), dtype=np.float32)
    missing = set(range(store.n)) - set(rows)
    for idx, vec in rows.items():
        data[idx] = vec
    if unresolved:
        logger.warning("load_vectors: %d unresolvable ids skipped", len(unresolved))
    return EmbeddingMatrix(data=data, method="cbf", missing=frozenset(missing)), unresolved
