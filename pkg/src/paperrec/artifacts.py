"""On-disk artifact layout, digests, and the load path shared by CLI and service.

Pipeline stages communicate only through files under one data directory, so
every stage is independently restartable. Writes are atomic (temp file +
rename) and guarded: an existing artifact with identical content is left
alone, a differing one is refused unless forced. Each artifact gets a
.sha256 sidecar; loads verify it.
"""

from __future__ import annotations

import hashlib
import io
import logging
import os
from dataclasses import dataclass
from pathlib import Path

from .annindex import AnnIndex, build_index
from .cbfembed import HashEmbedderConfig, embed_corpus
from .citegraph import CitationGraph, build_graph, load_graph, save_graph
from .corpus import CorpusStore, export_id_map, parse_records, serialize_records
from .embedding import EmbeddingMatrix, load_embedding, save_embedding
from .recommend import Recommender

logger = logging.getLogger(__name__)

CORPUS = "corpus.jsonl"
ID_MAP = "id_map.tsv"
GRAPH = "graph.csr"
CBF_EMB = "cbf.emb"
GB_EMB = "gb.emb"
CBF_INDEX = "cbf.ann"
GB_INDEX = "gb.ann"


class ArtifactError(RuntimeError):
    """Missing, corrupt, or conflicting on-disk artifact."""


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_artifact(path: str | Path, data: bytes, force: bool = False) -> bool:
    """Atomically write an artifact plus its .sha256 sidecar.

    Returns True if written, False if an identical artifact already existed.
    Existing artifacts with different content are never silently replaced.
    """
    path = Path(path)
    digest = sha256_bytes(data)
    if path.exists():
        existing = sha256_file(path)
        if existing == digest:
            logger.info("%s unchanged, not rewritten", path.name)
            return False
        if not force:
            raise ArtifactError(
                f"{path} already exists with different content; pass --force to replace"
            )
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp~")
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, path)
    sidecar = path.with_name(path.name + ".sha256")
    tmp_side = sidecar.with_name(sidecar.name + ".tmp~")
    with open(tmp_side, "w", encoding="ascii") as fh:
        fh.write(f"{digest}  {path.name}\n")
    os.replace(tmp_side, sidecar)
    logger.info("wrote %s (%d bytes)", path.name, len(data))
    return True


def verify_artifact(path: Path) -> None:
    """Check a file against its sidecar digest; missing sidecar is tolerated."""
    sidecar = path.with_name(path.name + ".sha256")
    if not sidecar.exists():
        return
    recorded = sidecar.read_text(encoding="ascii").split()[0]
    actual = sha256_file(path)
    if recorded != actual:
        raise ArtifactError(
            f"{path} does not match its recorded digest "
            f"(recorded {recorded[:12]}..., actual {actual[:12]}...)"
        )


def _require(path: Path, hint: str) -> Path:
    if not path.exists():
        raise ArtifactError(f"missing artifact {path}; run `{hint}` first")
    verify_artifact(path)
    return path


def corpus_bytes(store: CorpusStore) -> bytes:
    return ("\n".join(serialize_records(store)) + "\n").encode("utf-8")


def id_map_bytes(store: CorpusStore) -> bytes:
    buf = io.StringIO()
    export_id_map(store, buf)
    return buf.getvalue().encode("utf-8")


def graph_bytes(graph: CitationGraph) -> bytes:
    buf = io.BytesIO()
    save_graph(graph, buf)
    return buf.getvalue()


def embedding_bytes(emb: EmbeddingMatrix) -> bytes:
    buf = io.BytesIO()
    save_embedding(emb, buf)
    return buf.getvalue()


def index_bytes(index: AnnIndex) -> bytes:
    buf = io.BytesIO()
    index.save(buf)
    return buf.getvalue()


def load_store(data_dir: Path) -> CorpusStore:
    store, report = parse_records(_require(data_dir / CORPUS, "ingest"))
    if report.n_errors:
        raise ArtifactError(f"{data_dir / CORPUS} is not canonical: {report.n_errors} bad lines")
    return store


def load_graph_artifact(data_dir: Path) -> CitationGraph:
    return load_graph(_require(data_dir / GRAPH, "graph"))


def load_embedding_artifact(data_dir: Path, method: str) -> EmbeddingMatrix:
    name = CBF_EMB if method == "cbf" else GB_EMB
    stage = "embed-cbf" if method == "cbf" else "embed-gb"
    return load_embedding(_require(data_dir / name, stage))


def load_index_artifact(data_dir: Path, method: str, emb: EmbeddingMatrix) -> AnnIndex:
    name = CBF_INDEX if method == "cbf" else GB_INDEX
    return AnnIndex.load(_require(data_dir / name, f"index --method {method}"), emb)


@dataclass(frozen=True)
class Bundle:
    """Everything the query surface needs, loaded read-only."""

    store: CorpusStore
    graph: CitationGraph
    cbf_emb: EmbeddingMatrix
    gb_emb: EmbeddingMatrix
    cbf_index: AnnIndex
    gb_index: AnnIndex

    def recommender(self) -> Recommender:
        return Recommender(self.store, self.cbf_emb, self.cbf_index, self.gb_emb, self.gb_index)


def load_bundle(data_dir: str | Path) -> Bundle:
    """Load and digest-verify the full artifact set."""
    data_dir = Path(data_dir)
    store = load_store(data_dir)
    graph = load_graph_artifact(data_dir)
    if graph.n != store.n:
        raise ArtifactError(
            f"graph covers {graph.n} nodes but corpus has {store.n} papers; rebuild"
        )
    cbf_emb = load_embedding_artifact(data_dir, "cbf")
    gb_emb = load_embedding_artifact(data_dir, "gb")
    cbf_index = load_index_artifact(data_dir, "cbf", cbf_emb)
    gb_index = load_index_artifact(data_dir, "gb", gb_emb)
    return Bundle(store, graph, cbf_emb, gb_emb, cbf_index, gb_index)


def build_default_pipeline(
    store: CorpusStore,
    data_dir: str | Path,
    cbf_config: HashEmbedderConfig | None = None,
    force: bool = False,
) -> Bundle:
    """Convenience: run every stage in memory and persist the artifact set.

    Used by demos and tests; the CLI runs the same stages one subcommand at
    a time.
    """
    from .gbembed import SpectralParams, embed_graph

    data_dir = Path(data_dir)
    data_dir.mkdir(parents=True, exist_ok=True)
    graph = build_graph(store)
    cbf_emb = embed_corpus(store, cbf_config or HashEmbedderConfig())
    gb_params = SpectralParams(d=min(128, max(1, graph.n)))
    gb_emb = embed_graph(graph, gb_params)
    cbf_index = build_index(cbf_emb)
    gb_index = build_index(gb_emb)
    write_artifact(data_dir / CORPUS, corpus_bytes(store), force)
    write_artifact(data_dir / ID_MAP, id_map_bytes(store), force)
    write_artifact(data_dir / GRAPH, graph_bytes(graph), force)
    write_artifact(data_dir / CBF_EMB, embedding_bytes(cbf_emb), force)
    write_artifact(data_dir / GB_EMB, embedding_bytes(gb_emb), force)
    write_artifact(data_dir / CBF_INDEX, index_bytes(cbf_index), force)
    write_artifact(data_dir / GB_INDEX, index_bytes(gb_index), force)
    return Bundle(store, graph, cbf_emb, gb_emb, cbf_index, gb_index)
