"""Citation graph as compact CSR arrays, plus binning and subgraphs.

Nodes are corpus indices. Edges point from citing paper to cited paper
(i references j gives the directed edge i -> j). Both directions are stored
so in- and out-neighbourhoods are O(1) slices. Evaluation treats edges as
symmetric evidence of relatedness, so hop distances use the undirected view.
"""

from __future__ import annotations

import hashlib
import struct
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator

import numpy as np
import scipy.sparse as sp

from .corpus import CorpusStore

_MAGIC = b"CSR1"


class GraphFormatError(ValueError):
    """Raised when a serialized graph fails validation; names the byte offset."""


def _csr_from_pairs(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sort (src, dst) pairs into CSR offsets + targets, deduplicating."""
    if len(src) == 0:
        return np.zeros(n + 1, dtype=np.uint64), np.zeros(0, dtype=np.uint32)
    order = np.lexsort((dst, src))
    src = src[order]
    dst = dst[order]
    keep = np.ones(len(src), dtype=bool)
    keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    src = src[keep]
    dst = dst[keep]
    counts = np.bincount(src, minlength=n)
    offsets = np.zeros(n + 1, dtype=np.uint64)
    np.cumsum(counts, out=offsets[1:])
    return offsets, dst.astype(np.uint32)


@dataclass(frozen=True)
class CitationGraph:
    """Directed citation graph with both adjacency directions in CSR form."""

    n: int
    out_offsets: np.ndarray  # u64, length n + 1
    out_targets: np.ndarray  # u32, length edge_count, ascending within a row
    in_offsets: np.ndarray
    in_targets: np.ndarray

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError("n must be >= 0")
        if len(self.out_offsets) != self.n + 1 or len(self.in_offsets) != self.n + 1:
            raise ValueError("offset arrays must have length n + 1")
        if len(self.out_targets) != len(self.in_targets):
            raise ValueError("out and in edge counts differ")

    @property
    def edge_count(self) -> int:
        return int(len(self.out_targets))

    def out_neighbors(self, i: int) -> np.ndarray:
        """Papers that i cites (ascending index order)."""
        self._check_node(i)
        return self.out_targets[int(self.out_offsets[i]) : int(self.out_offsets[i + 1])]

    def in_neighbors(self, i: int) -> np.ndarray:
        """Papers that cite i (ascending index order)."""
        self._check_node(i)
        return self.in_targets[int(self.in_offsets[i]) : int(self.in_offsets[i + 1])]

    def out_degree(self, i: int) -> int:
        self._check_node(i)
        return int(self.out_offsets[i + 1] - self.out_offsets[i])

    def in_degree(self, i: int) -> int:
        self._check_node(i)
        return int(self.in_offsets[i + 1] - self.in_offsets[i])

    def degree(self, i: int) -> int:
        """Total incident edge count (an edge cited both ways counts twice)."""
        return self.out_degree(i) + self.in_degree(i)

    def degrees(self) -> np.ndarray:
        """Vector of total incident edge counts."""
        out = np.diff(self.out_offsets.astype(np.int64))
        inc = np.diff(self.in_offsets.astype(np.int64))
        return out + inc

    def _check_node(self, i: int) -> None:
        if not 0 <= i < self.n:
            raise IndexError(f"node {i} out of range [0, {self.n})")

    def undirected_neighbors(self, i: int) -> np.ndarray:
        """Union of out- and in-neighbours, sorted, deduplicated."""
        merged = np.union1d(self.out_neighbors(i), self.in_neighbors(i))
        return merged.astype(np.uint32)

    def sym_adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency (scipy CSR, float64), mutual edges merged."""
        m = self.edge_count
        src = np.repeat(
            np.arange(self.n, dtype=np.int64), np.diff(self.out_offsets.astype(np.int64))
        )
        dst = self.out_targets.astype(np.int64)
        a = sp.coo_matrix(
            (np.ones(m, dtype=np.float64), (src, dst)), shape=(self.n, self.n)
        ).tocsr()
        sym = a + a.T
        sym.data[:] = 1.0
        return sym

    def digest(self) -> str:
        """sha256 over the serialized form; stable artifact identity."""
        h = hashlib.sha256()
        for chunk in _serialize_chunks(self):
            h.update(chunk)
        return h.hexdigest()


def build_graph(store: CorpusStore) -> CitationGraph:
    """Build the graph from record references.

    References to ids outside the corpus are dropped (the corpus is the
    universe). Duplicate and self edges are impossible by record invariants
    but deduplication is applied anyway so external callers can trust CSR
    uniqueness.
    """
    src_list: list[int] = []
    dst_list: list[int] = []
    for i, rec in enumerate(store):
        for ref in rec.references:
            j = store.resolve(ref)
            if j is not None and j != i:
                src_list.append(i)
                dst_list.append(j)
    src = np.asarray(src_list, dtype=np.int64)
    dst = np.asarray(dst_list, dtype=np.int64)
    out_off, out_tgt = _csr_from_pairs(store.n, src, dst)
    in_off, in_tgt = _csr_from_pairs(store.n, dst, src)
    return CitationGraph(store.n, out_off, out_tgt, in_off, in_tgt)


def from_edges(n: int, edges: Iterable[tuple[int, int]]) -> CitationGraph:
    """Graph from explicit (src, dst) directed pairs; self edges rejected."""
    pairs = list(edges)
    if pairs:
        src = np.asarray([p[0] for p in pairs], dtype=np.int64)
        dst = np.asarray([p[1] for p in pairs], dtype=np.int64)
        if src.min() < 0 or dst.min() < 0 or src.max() >= n or dst.max() >= n:
            raise ValueError("edge endpoint out of range")
        if np.any(src == dst):
            raise ValueError("self edges are not allowed")
    else:
        src = np.zeros(0, dtype=np.int64)
        dst = np.zeros(0, dtype=np.int64)
    out_off, out_tgt = _csr_from_pairs(n, src, dst)
    in_off, in_tgt = _csr_from_pairs(n, dst, src)
    return CitationGraph(n, out_off, out_tgt, in_off, in_tgt)


def hop_distance(graph: CitationGraph, a: int, b: int, max_hops: int = 4) -> int | None:
    """Undirected BFS distance from a to b, or None if above max_hops.

    max_hops bounds the search frontier, so cost stays local even on large
    graphs.
    """
    if max_hops < 1:
        raise ValueError("max_hops must be >= 1")
    graph._check_node(a)
    graph._check_node(b)
    if a == b:
        return 0
    seen = {a}
    frontier = deque([(a, 0)])
    while frontier:
        node, depth = frontier.popleft()
        if depth == max_hops:
            continue
        for nxt in graph.undirected_neighbors(node):
            nxt = int(nxt)
            if nxt == b:
                return depth + 1
            if nxt not in seen:
                seen.add(nxt)
                frontier.append((nxt, depth + 1))
    return None


@dataclass(frozen=True)
class BinAssignment:
    """A partition of corpus indices into n_bins labelled groups."""

    n_bins: int
    labels: np.ndarray  # int32, length n, values in [0, n_bins)

    def __post_init__(self) -> None:
        if self.n_bins < 1:
            raise ValueError("n_bins must be >= 1")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.n_bins):
            raise ValueError("labels out of range")

    def members(self, b: int) -> np.ndarray:
        if not 0 <= b < self.n_bins:
            raise IndexError(f"bin {b} out of range")
        return np.flatnonzero(self.labels == b)


def assign_bins(store: CorpusStore, n_bins: int, seed: int = 0) -> BinAssignment:
    """Hash-based stable binning of papers by external id.

    blake2b keyed with the seed, so the assignment is reproducible across
    runs and platforms and independent of corpus order.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    key = int(seed).to_bytes(8, "little", signed=True)
    labels = np.empty(store.n, dtype=np.int32)
    for i in range(store.n):
        h = hashlib.blake2b(store.external_id(i).encode("utf-8"), key=key, digest_size=8)
        labels[i] = int.from_bytes(h.digest(), "little") % n_bins
    return BinAssignment(n_bins, labels)


@dataclass(frozen=True)
class SubgraphMap:
    """Index translation for an induced subgraph."""

    old_of_new: np.ndarray  # int64, length n_sub
    new_of_old: np.ndarray  # int64, length n_full, -1 where dropped

    @property
    def n_sub(self) -> int:
        return int(len(self.old_of_new))


def induced_subgraph(
    graph: CitationGraph, bins: BinAssignment, keep: Iterable[int]
) -> tuple[CitationGraph, SubgraphMap]:
    """Subgraph on the papers whose bin is in ``keep``, indices remapped densely.

    Edges survive only if both endpoints are kept. New indices preserve the
    relative order of old ones.
    """
    keep_bins = set(int(b) for b in keep)
    if not keep_bins:
        raise ValueError("keep must name at least one bin")
    if len(bins.labels) != graph.n:
        raise ValueError("bin assignment does not cover the graph")
    bad = [b for b in keep_bins if not 0 <= b < bins.n_bins]
    if bad:
        raise ValueError(f"bin indices out of range: {sorted(bad)}")
    mask = np.isin(bins.labels, sorted(keep_bins))
    return induced_by_mask(graph, mask)


def induced_by_mask(graph: CitationGraph, keep: np.ndarray) -> tuple[CitationGraph, SubgraphMap]:
    """Subgraph on the nodes where ``keep`` is True; see induced_subgraph."""
    keep = np.asarray(keep, dtype=bool)
    if len(keep) != graph.n:
        raise ValueError("keep mask length must equal node count")
    old_of_new = np.flatnonzero(keep).astype(np.int64)
    new_of_old = np.full(graph.n, -1, dtype=np.int64)
    new_of_old[old_of_new] = np.arange(len(old_of_new), dtype=np.int64)
    src_full = np.repeat(
        np.arange(graph.n, dtype=np.int64), np.diff(graph.out_offsets.astype(np.int64))
    )
    dst_full = graph.out_targets.astype(np.int64)
    mask = keep[src_full] & keep[dst_full]
    src = new_of_old[src_full[mask]]
    dst = new_of_old[dst_full[mask]]
    n_sub = len(old_of_new)
    out_off, out_tgt = _csr_from_pairs(n_sub, src, dst)
    in_off, in_tgt = _csr_from_pairs(n_sub, dst, src)
    sub = CitationGraph(n_sub, out_off, out_tgt, in_off, in_tgt)
    return sub, SubgraphMap(old_of_new, new_of_old)


def _serialize_chunks(graph: CitationGraph) -> Iterator[bytes]:
    yield _MAGIC
    yield struct.pack("<QQ", graph.n, graph.edge_count)
    yield graph.out_offsets.astype("<u8").tobytes()
    yield graph.out_targets.astype("<u4").tobytes()
    yield graph.in_offsets.astype("<u8").tobytes()
    yield graph.in_targets.astype("<u4").tobytes()


def save_graph(graph: CitationGraph, target: str | Path | IO[bytes]) -> None:
    """Write the CSR1 binary form (little-endian, out block then in block)."""
    if isinstance(target, (str, Path)):
        with open(target, "wb") as fh:
            save_graph(graph, fh)
        return
    for chunk in _serialize_chunks(graph):
        target.write(chunk)


def _read_exact(fh: IO[bytes], count: int, offset: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise GraphFormatError(
            f"truncated graph file: wanted {count} bytes for {what} at offset {offset}, "
            f"got {len(buf)}"
        )
    return buf


def load_graph(source: str | Path | IO[bytes]) -> CitationGraph:
    """Read the CSR1 binary form; corrupt input raises GraphFormatError."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_graph(fh)
    fh = source
    offset = 0
    magic = _read_exact(fh, 4, offset, "magic")
    if magic != _MAGIC:
        raise GraphFormatError(f"bad magic {magic!r} at offset 0, expected {_MAGIC!r}")
    offset += 4
    header = _read_exact(fh, 16, offset, "header")
    n, m = struct.unpack("<QQ", header)
    offset += 16

    def read_array(dtype: str, count: int, what: str) -> np.ndarray:
        nonlocal offset
        nbytes = np.dtype(dtype).itemsize * count
        buf = _read_exact(fh, nbytes, offset, what)
        offset += nbytes
        return np.frombuffer(buf, dtype=dtype).copy()

    out_off = read_array("<u8", n + 1, "out offsets")
    out_tgt = read_array("<u4", m, "out targets")
    in_off = read_array("<u8", n + 1, "in offsets")
    in_tgt = read_array("<u4", m, "in targets")
    trailing = fh.read(1)
    if trailing:
        raise GraphFormatError(f"trailing bytes at offset {offset}")
    for name, off in (("out", out_off), ("in", in_off)):
        if off[0] != 0 or off[-1] != m or np.any(np.diff(off.astype(np.int64)) < 0):
            raise GraphFormatError(f"{name} offsets are not a valid cumulative array")
    for name, tgt in (("out", out_tgt), ("in", in_tgt)):
        if m and tgt.max() >= n:
            raise GraphFormatError(f"{name} target id exceeds node count")
    return CitationGraph(int(n), out_off, out_tgt, in_off, in_tgt)
