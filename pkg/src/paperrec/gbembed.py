"""Graph-based embeddings: sparse factorization plus spectral propagation.

Two stages. First a randomized truncated SVD of a degree-weighted adjacency
transform produces base vectors cheaply. Then a truncated Chebyshev expansion
of a Gaussian band-pass filter on the normalized graph Laplacian smooths those
vectors over the neighbourhood structure. Isolated nodes have no graph signal
and stay in the missing set throughout.
"""

from __future__ import annotations

import logging
import time
import tracemalloc
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .citegraph import CitationGraph
from .embedding import EmbeddingMatrix, unit_rows

logger = logging.getLogger(__name__)


class SpectralError(RuntimeError):
    """Numerical failure in the spectral pipeline, with diagnostics."""


@dataclass(frozen=True)
class SpectralParams:
    """Knobs for both embedding stages.

    d          target dimension, 1 <= d <= n
    K          Chebyshev expansion order for propagation, >= 0
    mu         band-pass center in the Laplacian spectrum, in [0, 2]
    theta      band-pass sharpness, > 0
    oversample extra sketch columns for the randomized SVD, >= 0
    power_iters subspace iterations for the randomized SVD, >= 0
    seed       RNG seed for the Gaussian sketch
    """

    d: int = 128
    K: int = 10
    mu: float = 0.2
    theta: float = 0.5
    oversample: int = 10
    power_iters: int = 2
    seed: int = 0

    def __post_init__(self) -> None:
        if self.d < 1:
            raise ValueError("d must be >= 1")
        if self.K < 0:
            raise ValueError("K must be >= 0")
        if not 0.0 <= self.mu <= 2.0:
            raise ValueError("mu must lie in [0, 2]")
        if self.theta <= 0.0:
            raise ValueError("theta must be > 0")
        if self.oversample < 0:
            raise ValueError("oversample must be >= 0")
        if self.power_iters < 0:
            raise ValueError("power_iters must be >= 0")


@dataclass(frozen=True)
class StageMetrics:
    """Wall time and peak traced memory for one pipeline stage."""

    stage: str
    wall_seconds: float
    peak_bytes: int


class _Meter:
    """Context manager measuring wall time and tracemalloc peak."""

    def __init__(self, stage: str):
        self.stage = stage
        self.metrics: StageMetrics | None = None

    def __enter__(self) -> "_Meter":
        self._was_tracing = tracemalloc.is_tracing()
        if not self._was_tracing:
            tracemalloc.start()
        tracemalloc.reset_peak()
        self._t0 = time.perf_counter()
        return self

    def __exit__(self, *exc) -> None:
        wall = time.perf_counter() - self._t0
        _, peak = tracemalloc.get_traced_memory()
        if not self._was_tracing:
            tracemalloc.stop()
        self.metrics = StageMetrics(self.stage, wall, int(peak))
        logger.info("%s: %.3fs, peak %d bytes", self.stage, wall, peak)


def _weighted_transform(adj: sp.csr_matrix) -> tuple[sp.csr_matrix, np.ndarray]:
    """T with T[i, j] = ln(1 + 1/deg(i)) on symmetric edges, plus degrees."""
    deg = np.asarray(adj.sum(axis=1)).ravel()
    inv = np.zeros_like(deg)
    nz = deg > 0
    inv[nz] = np.log1p(1.0 / deg[nz])
    return sp.diags(inv) @ adj, deg


def _check_finite(arr: np.ndarray, stage: str, params: SpectralParams) -> None:
    if not np.all(np.isfinite(arr)):
        bad = int(np.count_nonzero(~np.isfinite(arr)))
        raise SpectralError(
            f"{stage} produced {bad} non-finite values "
            f"(d={params.d}, K={params.K}, mu={params.mu}, theta={params.theta}); "
            f"max finite magnitude {np.nanmax(np.abs(np.where(np.isfinite(arr), arr, 0.0)))}"
        )


def factorize(graph: CitationGraph, params: SpectralParams = SpectralParams()) -> EmbeddingMatrix:
    """Stage one: randomized truncated SVD of the weighted adjacency transform.

    Returns rows of U * sqrt(S), the scaled left singular vectors. Gaussian
    sketch of width d + oversample, QR range finding, power_iters subspace
    iterations with re-orthonormalization, then an exact SVD of the small
    projected matrix. Isolated nodes come back as missing rows of zeros.
    """
    n = graph.n
    if n < 1:
        raise ValueError("graph must have at least one node")
    if params.d > n:
        raise ValueError(f"d={params.d} exceeds node count {n}")
    with _Meter("factorize") as meter:
        adj = graph.sym_adjacency()
        t_mat, deg = _weighted_transform(adj)
        missing = frozenset(np.flatnonzero(deg == 0).tolist())
        rng = np.random.default_rng(params.seed)
        k = min(n, params.d + params.oversample)
        sketch = rng.standard_normal((n, k))
        basis, _ = np.linalg.qr(t_mat @ sketch)
        for _ in range(params.power_iters):
            basis, _ = np.linalg.qr(t_mat.T @ basis)
            basis, _ = np.linalg.qr(t_mat @ basis)
        small = basis.T @ t_mat
        try:
            u_small, sigma, _ = np.linalg.svd(small, full_matrices=False)
        except np.linalg.LinAlgError as exc:
            raise SpectralError(
                f"SVD of the projected matrix failed: {exc} "
                f"(n={n}, k={k}, nnz={t_mat.nnz})"
            ) from exc
        u = basis @ u_small[:, : params.d]
        data = u * np.sqrt(sigma[: params.d])
        _check_finite(data, "factorize", params)
        data = data.astype(np.float32)
        for i in missing:
            data[i] = 0.0
    return EmbeddingMatrix(
        data=data,
        method="gb",
        missing=missing,
        stats={"factorize": meter.metrics, "singular_values": sigma[: params.d].tolist()},
    )


def _chebyshev_coefficients(params: SpectralParams) -> np.ndarray:
    """Coefficients of the band-pass filter on the shifted spectrum.

    The normalized Laplacian with self-loops has spectrum in [0, 2]; the
    Chebyshev basis lives on [-1, 1], so the filter
    g(lam) = exp(-((lam - mu)^2 - 1) * theta / 2) is sampled through the
    change of variables lam = x + 1.
    """

    def shifted(x: np.ndarray) -> np.ndarray:
        lam = np.asarray(x, dtype=np.float64) + 1.0
        return np.exp(-0.5 * ((lam - params.mu) ** 2 - 1.0) * params.theta)

    return np.polynomial.chebyshev.chebinterpolate(shifted, params.K)


def propagate(
    graph: CitationGraph,
    emb: EmbeddingMatrix,
    params: SpectralParams = SpectralParams(),
) -> EmbeddingMatrix:
    """Stage two: smooth base vectors with a Chebyshev band-pass of the Laplacian.

    Works on the shifted operator L_hat = L_tilde - I (spectrum in [-1, 1])
    where L_tilde is the normalized Laplacian of the graph with self-loops.
    The Chebyshev recurrence only ever multiplies sparse matrix by dense
    block, so cost is O(K * nnz * d). Output rows are L2-normalized; rows
    that come out numerically zero join the missing set.
    """
    n = graph.n
    if n < 1:
        raise ValueError("graph must have at least one node")
    if emb.n != n:
        raise ValueError(f"embedding has {emb.n} rows, graph has {n} nodes")
    with _Meter("propagate") as meter:
        adj = graph.sym_adjacency()
        adj_tilde = (adj + sp.eye(n, format="csr")).tocsr()
        deg_tilde = np.asarray(adj_tilde.sum(axis=1)).ravel()
        d_inv_sqrt = sp.diags(1.0 / np.sqrt(deg_tilde))
        # L_hat = (I - D^-1/2 A_tilde D^-1/2) - I = -M, so the recurrence
        # below applies -M wherever L_hat acts.
        m_op = (d_inv_sqrt @ adj_tilde @ d_inv_sqrt).tocsr()
        coeffs = _chebyshev_coefficients(params)
        base = emb.data.astype(np.float64)
        acc = coeffs[0] * base
        if params.K >= 1:
            t_prev = base
            t_cur = -(m_op @ base)
            acc = acc + coeffs[1] * t_cur
            for k in range(2, params.K + 1):
                t_next = -2.0 * (m_op @ t_cur) - t_prev
                acc = acc + coeffs[k] * t_next
                t_prev, t_cur = t_cur, t_next
        _check_finite(acc, "propagate", params)
        data, missing = unit_rows(acc, emb.missing)
    stats = dict(emb.stats or {})
    stats["propagate"] = meter.metrics
    return EmbeddingMatrix(data=data, method="gb", missing=missing, stats=stats)


def embed_graph(
    graph: CitationGraph, params: SpectralParams = SpectralParams()
) -> EmbeddingMatrix:
    """Full pipeline: factorize then propagate. Rows are unit-norm or missing."""
    return propagate(graph, factorize(graph, params), params)
