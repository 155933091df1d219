"""Dense numerical kernels shared by the metrics.

Everything accumulates in float64 regardless of the float32 storage width.
Pairwise distances use the expansion ||x-y||^2 = ||x||^2 + ||y||^2 - 2<x,y>
computed in fixed-size chunks; entries that come out tiny relative to the
norms are recomputed directly so duplicates give exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DimensionMismatch,
    EigenFailure,
    SignificantNegativeEigenvalue,
    TooFewSamples,
    TooManyComponents,
)
from .store import EmbeddingSet

CHUNK = 1024
# relative threshold below which an expanded squared distance is recomputed
_RECOMPUTE_REL = 1e-8


@dataclass
class GaussianSummary:
    mean: np.ndarray  # (d,)
    cov: np.ndarray   # (d, d), symmetric
    count: int


@dataclass
class DistanceMatrixView:
    rows: int
    cols: int
    chunk: int
    values: np.ndarray  # (rows, cols) float64 Euclidean distances


def summarize_gaussian(es: EmbeddingSet) -> GaussianSummary:
    """Sample mean and (n-1)-denominator covariance, accumulated chunkwise."""
    n, d = es.n, es.d
    if n < 2:
        raise TooFewSamples(f"need n >= 2 for a covariance, got {n}")
    X = es.data
    total = np.zeros(d)
    for lo in range(0, n, 4096):
        total += X[lo:lo + 4096].sum(axis=0, dtype=np.float64)
    mean = total / n
    acc = np.zeros((d, d))
    for lo in range(0, n, 4096):
        C = X[lo:lo + 4096].astype(np.float64) - mean
        acc += C.T @ C
    cov = acc / (n - 1)
    cov = 0.5 * (cov + cov.T)
    return GaussianSummary(mean=mean, cov=cov, count=n)


def trace_sqrt_product(a: np.ndarray, b: np.ndarray) -> float:
    """Tr((a b)^{1/2}) via the eigenvalues of the product.

    Eigenvalues in [-d*eps, 0] are clamped to zero; anything more negative
    signals non-PSD input.  On that signal both matrices get +1e-6*I and the
    computation retries once (the standard near-singular-covariance fallback).
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape != b.shape:
        raise DimensionMismatch(f"need matching square matrices, got {a.shape} and {b.shape}")
    d = a.shape[0]
    for jitter in (0.0, 1e-6):
        aj = a if jitter == 0.0 else a + jitter * np.eye(d)
        bj = b if jitter == 0.0 else b + jitter * np.eye(d)
        eps = _RECOMPUTE_REL * max(np.abs(np.diag(aj)).max(),
                                   np.abs(np.diag(bj)).max(), 0.0)
        w = _product_eigvals(aj, bj)
        low = float(w.min(initial=0.0))
        if low >= -d * eps:
            w = np.where(w < 0.0, 0.0, w)
            return float(np.sqrt(w).sum())
    raise SignificantNegativeEigenvalue(
        f"product eigenvalue {low} below -d*eps = {-d * eps} after +1e-6*I retry"
    )


def _product_eigvals(a, b):
    # a = L L^T makes eigvals(a b) = eigvals(L^T b L), a symmetric problem
    try:
        L = np.linalg.cholesky(a)
    except np.linalg.LinAlgError:
        L = None
    if L is None:
        try:
            L = np.linalg.cholesky(b)  # eigvals(ab) == eigvals(ba)
            a, b = b, a
        except np.linalg.LinAlgError:
            L = None
    try:
        if L is not None:
            m = L.T @ b @ L
            return np.linalg.eigvalsh(0.5 * (m + m.T))
        return np.real(scipy.linalg.eigvals(a @ b, check_finite=False))
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError, ValueError) as exc:
        raise EigenFailure(f"eigenvalue computation failed: {exc}") from exc


def sq_norms(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    out = np.empty(X.shape[0])
    for lo in range(0, X.shape[0], 4096):
        C = X[lo:lo + 4096].astype(np.float64)
        out[lo:lo + 4096] = np.einsum("ij,ij->i", C, C)
    return out


def iter_sqdist_blocks(X, Y, chunk: int = CHUNK):
    """Yield (row_start, block) of squared distances between X rows and Y rows."""
    X = np.asarray(X)
    Y = np.asarray(Y)
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatch(f"d mismatch: {X.shape[1]} vs {Y.shape[1]}")
    nx = sq_norms(X)
    ny = sq_norms(Y)
    Y64 = Y.astype(np.float64, copy=False)
    for lo in range(0, X.shape[0], chunk):
        Xc = X[lo:lo + chunk].astype(np.float64, copy=False)
        sq = nx[lo:lo + chunk, None] + ny[None, :] - 2.0 * (Xc @ Y64.T)
        # tiny or negative entries lose all precision to cancellation:
        # recompute them directly so exact duplicates give exactly 0
        small = sq < _RECOMPUTE_REL * (nx[lo:lo + chunk, None] + ny[None, :])
        if small.any():
            ii, jj = np.nonzero(small)
            diff = Xc[ii] - Y64[jj]
            sq[ii, jj] = np.einsum("ij,ij->i", diff, diff)
        np.maximum(sq, 0.0, out=sq)
        yield lo, sq


def pairwise_distances(query: EmbeddingSet, reference: EmbeddingSet,
                       chunk: int = CHUNK) -> DistanceMatrixView:
    """Full Euclidean distance matrix between two sets."""
    out = np.empty((query.n, reference.n))
    for lo, sq in iter_sqdist_blocks(query.data, reference.data, chunk):
        out[lo:lo + sq.shape[0]] = np.sqrt(sq)
    return DistanceMatrixView(rows=query.n, cols=reference.n, chunk=chunk, values=out)


def pca_fit_project(fit_on: EmbeddingSet, project: list[EmbeddingSet],
                    components: int) -> list[EmbeddingSet]:
    """Center on `fit_on`, project everything onto its top right-singular
    directions (descending singular value, largest-magnitude coordinate of
    each direction made positive).

    Projections keep float64 so a components=d projection is an isometry.
    """
    if components < 1:
        raise ValueError("components must be >= 1")
    if components > min(fit_on.n, fit_on.d):
        raise TooManyComponents(
            f"components {components} exceeds min(n, d) = {min(fit_on.n, fit_on.d)}"
        )
    mean = fit_on.data.mean(axis=0, dtype=np.float64)
    centered = fit_on.data.astype(np.float64) - mean
    try:
        _, _, vt = np.linalg.svd(centered, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"SVD failed: {exc}") from exc
    W = vt[:components].copy()
    lead = np.argmax(np.abs(W), axis=1)
    signs = np.sign(W[np.arange(components), lead])
    signs[signs == 0] = 1.0
    W *= signs[:, None]

    out = []
    for es in project:
        if es.d != fit_on.d:
            raise DimensionMismatch(f"d mismatch: {es.d} vs {fit_on.d}")
        proj = (es.data.astype(np.float64) - mean) @ W.T
        out.append(EmbeddingSet(data=proj, labels=es.labels,
                                encoder_id=es.encoder_id, source_id=es.source_id))
    return out
