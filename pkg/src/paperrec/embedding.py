"""Shared embedding container and its binary format.

Both embedding families (content hashing and graph spectral) produce the same
artifact: a float32 (n, d) matrix aligned with corpus indices plus an explicit
set of missing rows. Missing rows are stored as zeros and must never be
interpreted as vectors; every consumer checks the missing set first.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import IO, Iterable, Mapping

import numpy as np

_MAGIC = b"EMB1"

METHOD_TAGS = {"cbf": 0, "gb": 1}
_TAG_METHODS = {v: k for k, v in METHOD_TAGS.items()}


class EmbeddingFormatError(ValueError):
    """Raised when a serialized embedding fails validation."""


@dataclass(frozen=True)
class EmbeddingMatrix:
    """Dense per-paper vectors with an explicit missing-row set.

    data is float32 and row-aligned with corpus indices. Rows listed in
    ``missing`` hold zeros. ``imputed`` marks rows that were filled in after
    the fact; they are valid vectors but flagged so downstream reporting can
    distinguish them.
    """

    data: np.ndarray
    method: str
    missing: frozenset = frozenset()
    imputed: frozenset = frozenset()
    stats: Mapping | None = field(default=None, compare=False)

    def __post_init__(self) -> None:
        if self.method not in METHOD_TAGS:
            raise ValueError(f"method must be one of {sorted(METHOD_TAGS)}")
        if self.data.ndim != 2:
            raise ValueError("data must be a 2-d array")
        if self.data.dtype != np.float32:
            object.__setattr__(self, "data", self.data.astype(np.float32))
        for idx in self.missing:
            if not 0 <= idx < self.data.shape[0]:
                raise ValueError(f"missing index {idx} out of range")
        if self.missing & self.imputed:
            raise ValueError("a row cannot be both missing and imputed")

    @property
    def n(self) -> int:
        return int(self.data.shape[0])

    @property
    def d(self) -> int:
        return int(self.data.shape[1])

    def is_missing(self, i: int) -> bool:
        return i in self.missing

    def present_indices(self) -> np.ndarray:
        """Sorted indices of rows that hold real vectors."""
        mask = np.ones(self.n, dtype=bool)
        for i in self.missing:
            mask[i] = False
        return np.flatnonzero(mask)

    def row(self, i: int) -> np.ndarray:
        """Vector for row i; LookupError if the row is missing."""
        if i in self.missing:
            raise LookupError(f"row {i} is missing")
        return self.data[i]

    def cosine(self, i: int, j: int) -> float:
        """Cosine between two present rows, computed in float64."""
        a = self.row(i).astype(np.float64)
        b = self.row(j).astype(np.float64)
        na = np.linalg.norm(a)
        nb = np.linalg.norm(b)
        if na == 0.0 or nb == 0.0:
            raise ValueError("cosine undefined for zero vectors")
        return float(a @ b / (na * nb))

    def digest(self) -> str:
        """sha256 over shape, method, data bytes, and the sorted missing set."""
        h = hashlib.sha256()
        h.update(struct.pack("<QIB", self.n, self.d, METHOD_TAGS[self.method]))
        h.update(np.ascontiguousarray(self.data, dtype="<f4").tobytes())
        h.update(np.asarray(sorted(self.missing), dtype="<u8").tobytes())
        return h.hexdigest()

    def with_rows(self, rows: Mapping[int, np.ndarray], imputed: bool = True) -> "EmbeddingMatrix":
        """New matrix with the given missing rows filled in.

        Refuses to overwrite a present row; imputation must never clobber a
        real vector.
        """
        if not rows:
            return self
        data = self.data.copy()
        for i, vec in rows.items():
            if i not in self.missing:
                raise ValueError(f"row {i} is not missing; refusing to overwrite")
            vec = np.asarray(vec, dtype=np.float32)
            if vec.shape != (self.d,):
                raise ValueError(f"row {i} has shape {vec.shape}, expected ({self.d},)")
            data[i] = vec
        new_missing = frozenset(self.missing - set(rows))
        new_imputed = self.imputed | (set(rows) if imputed else set())
        return replace(self, data=data, missing=new_missing, imputed=frozenset(new_imputed))


def unit_rows(data: np.ndarray, missing: Iterable[int] = ()) -> tuple[np.ndarray, frozenset]:
    """L2-normalize rows; rows with ~zero norm join the missing set as zeros."""
    data = np.asarray(data, dtype=np.float64)
    norms = np.linalg.norm(data, axis=1)
    dead = norms < 1e-12
    norms[dead] = 1.0
    out = (data / norms[:, None]).astype(np.float32)
    out[dead] = 0.0
    all_missing = frozenset(int(i) for i in missing) | frozenset(np.flatnonzero(dead).tolist())
    for i in all_missing:
        out[i] = 0.0
    return out, all_missing


def save_embedding(emb: EmbeddingMatrix, target: str | Path | IO[bytes]) -> None:
    """Write the EMB1 binary form.

    Layout, all little-endian: magic "EMB1", u64 n, u32 d, u8 method tag
    (0 = cbf, 1 = gb), f32 data row-major, u64 missing count, u64 missing
    indices ascending.
    """
    if isinstance(target, (str, Path)):
        with open(target, "wb") as fh:
            save_embedding(emb, fh)
        return
    target.write(_MAGIC)
    target.write(struct.pack("<QIB", emb.n, emb.d, METHOD_TAGS[emb.method]))
    target.write(np.ascontiguousarray(emb.data, dtype="<f4").tobytes())
    missing = sorted(emb.missing)
    target.write(struct.pack("<Q", len(missing)))
    target.write(np.asarray(missing, dtype="<u8").tobytes())


def _read_exact(fh: IO[bytes], count: int, offset: int, what: str) -> bytes:
    buf = fh.read(count)
    if len(buf) != count:
        raise EmbeddingFormatError(
            f"truncated embedding file: wanted {count} bytes for {what} at offset {offset}, "
            f"got {len(buf)}"
        )
    return buf


def load_embedding(source: str | Path | IO[bytes]) -> EmbeddingMatrix:
    """Read the EMB1 binary form; corrupt input raises EmbeddingFormatError."""
    if isinstance(source, (str, Path)):
        with open(source, "rb") as fh:
            return load_embedding(fh)
    fh = source
    offset = 0
    magic = _read_exact(fh, 4, offset, "magic")
    if magic != _MAGIC:
        raise EmbeddingFormatError(f"bad magic {magic!r} at offset 0, expected {_MAGIC!r}")
    offset += 4
    n, d, tag = struct.unpack("<QIB", _read_exact(fh, 13, offset, "header"))
    offset += 13
    if tag not in _TAG_METHODS:
        raise EmbeddingFormatError(f"unknown method tag {tag} at offset {offset - 1}")
    nbytes = 4 * n * d
    data = np.frombuffer(_read_exact(fh, nbytes, offset, "data"), dtype="<f4").copy()
    offset += nbytes
    data = data.reshape(n, d)
    (count,) = struct.unpack("<Q", _read_exact(fh, 8, offset, "missing count"))
    offset += 8
    if count > n:
        raise EmbeddingFormatError(f"missing count {count} exceeds n {n} at offset {offset - 8}")
    missing = np.frombuffer(
        _read_exact(fh, 8 * count, offset, "missing indices"), dtype="<u8"
    ).copy()
    offset += 8 * count
    trailing = fh.read(1)
    if trailing:
        raise EmbeddingFormatError(f"trailing bytes at offset {offset}")
    if count and missing.max() >= n:
        raise EmbeddingFormatError(f"missing index {missing.max()} out of range at offset {offset}")
    return EmbeddingMatrix(
        data=data, method=_TAG_METHODS[tag], missing=frozenset(int(i) for i in missing)
    )


def cosine_matrix(emb: EmbeddingMatrix) -> np.ndarray:
    """Dense pairwise cosine matrix in float64; missing rows give NaN.

    Only for small n (tests, demos); memory is O(n^2).
    """
    data = emb.data.astype(np.float64)
    norms = np.linalg.norm(data, axis=1)
    safe = norms.copy()
    safe[safe == 0.0] = 1.0
    unit = data / safe[:, None]
    out = unit @ unit.T
    if emb.missing:
        idx = sorted(emb.missing)
        out[idx, :] = np.nan
        out[:, idx] = np.nan
    return out
