"""Exact k-NN neighborhood metrics: precision/recall/density/coverage and
the rarity score.

Ball membership is closed (distance <= radius) and all boundary comparisons
happen in the squared-distance domain so they are consistent between index
build and queries.  Ties at the kth neighbor break toward the lower index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .errors import DimensionMismatch, KTooLarge, TooFewSamples
from .linalg import CHUNK, iter_sqdist_blocks
from .store import EmbeddingSet, subsample


@dataclass
class NeighborhoodIndex:
    data: np.ndarray       # reference rows
    k: int
    radii: np.ndarray      # (m,) kth-NN distance, self excluded
    radii_sq: np.ndarray   # (m,) same, pre-sqrt (used for membership tests)
    neighbors: np.ndarray  # (m, k) int64 neighbor indices, nearest first


@dataclass
class PrdcResult:
    precision: float
    recall: float
    density: float
    coverage: float
    k: int
    n_gen: int
    n_real: int


@dataclass
class RarityResult:
    scores: np.ndarray        # (n,) rarity per query; NaN when off-manifold
    on_manifold: np.ndarray   # (n,) bool
    on_manifold_fraction: float

    @property
    def values(self) -> np.ndarray:
        return self.scores[self.on_manifold]


def build_index(reference: EmbeddingSet, k: int) -> NeighborhoodIndex:
    """Exact kth-NN radii and neighbor lists for every reference row."""
    m = reference.n
    if not 1 <= k < m:
        raise KTooLarge(f"need 1 <= k < m, got k = {k}, m = {m}")
    radii_sq = np.empty(m)
    neighbors = np.empty((m, k), dtype=np.int64)
    for lo, sq in iter_sqdist_blocks(reference.data, reference.data):
        rows = sq.shape[0]
        sq[np.arange(rows), lo + np.arange(rows)] = np.inf  # exclude self
        part = np.partition(sq, k - 1, axis=1)
        radii_sq[lo:lo + rows] = part[:, k - 1]
        _fill_neighbor_rows(sq, radii_sq[lo:lo + rows], k, neighbors[lo:lo + rows])
    return NeighborhoodIndex(data=reference.data, k=k,
                             radii=np.sqrt(radii_sq), radii_sq=radii_sq,
                             neighbors=neighbors)


def _fill_neighbor_rows(sq, kth, k, out):
    # k smallest per row ordered by (distance, index); ties at the kth
    # distance resolve to the lowest indices
    lt = sq < kth[:, None]
    eq = sq == kth[:, None]
    for r in range(sq.shape[0]):
        idx = np.flatnonzero(lt[r])
        order = np.lexsort((idx, sq[r, idx]))
        idx = idx[order]
        need = k - idx.size
        if need > 0:
            idx = np.concatenate([idx, np.flatnonzero(eq[r])[:need]])
        out[r] = idx


def prdc(gen: EmbeddingSet, real: EmbeddingSet, k: int = 5,
         sample_cap: int = 10_000, seed: int = 0) -> PrdcResult:
    """Precision, recall, density, coverage with k-NN balls.

    Each set is first capped to `sample_cap` rows by a seeded subsample;
    afterwards both sets must still have more than k rows.
    """
    if gen.d != real.d:
        raise DimensionMismatch(f"d mismatch: {gen.d} vs {real.d}")
    if sample_cap and real.n > sample_cap:
        real = subsample(real, sample_cap, _rng.derive_seed(seed, "prdc", 0))
    if sample_cap and gen.n > sample_cap:
        gen = subsample(gen, sample_cap, _rng.derive_seed(seed, "prdc", 1))
    if real.n <= k or gen.n <= k:
        raise TooFewSamples(
            f"need more than k = {k} rows per set after capping, "
            f"got {real.n} real and {gen.n} gen"
        )
    real_idx = build_index(real, k)
    gen_idx = build_index(gen, k)

    counts = containment_counts(gen.data, real_idx)       # balls around real
    precision = float(np.mean(counts > 0))
    density = float(counts.sum()) / (k * gen.n)
    in_gen_balls = containment_counts(real.data, gen_idx)  # balls around gen
    recall = float(np.mean(in_gen_balls > 0))
    coverage = float(np.mean(_min_sq_to(real.data, gen.data) <= real_idx.radii_sq))
    return PrdcResult(precision=precision, recall=recall, density=density,
                      coverage=coverage, k=k, n_gen=gen.n, n_real=real.n)


def containment_counts(queries: np.ndarray, index: NeighborhoodIndex) -> np.ndarray:
    """Per query, how many reference balls (closed) contain it."""
    queries = np.asarray(queries)
    if queries.shape[1] != index.data.shape[1]:
        raise DimensionMismatch(
            f"d mismatch: {queries.shape[1]} vs {index.data.shape[1]}"
        )
    counts = np.empty(queries.shape[0], dtype=np.int64)
    for lo, sq in iter_sqdist_blocks(queries, index.data):
        counts[lo:lo + sq.shape[0]] = (sq <= index.radii_sq[None, :]).sum(axis=1)
    return counts


def _min_sq_to(queries, reference):
    out = np.empty(queries.shape[0])
    for lo, sq in iter_sqdist_blocks(queries, reference):
        out[lo:lo + sq.shape[0]] = sq.min(axis=1)
    return out


def rarity(queries: EmbeddingSet, index: NeighborhoodIndex) -> RarityResult:
    """Min covering-ball radius per query; no covering ball = off-manifold."""
    if queries.d != index.data.shape[1]:
        raise DimensionMismatch(
            f"d mismatch: {queries.d} vs {index.data.shape[1]}"
        )
    scores = np.full(queries.n, np.nan)
    for lo, sq in iter_sqdist_blocks(queries.data, index.data):
        inside = sq <= index.radii_sq[None, :]
        best = np.where(inside, index.radii[None, :], np.inf).min(axis=1)
        block = scores[lo:lo + sq.shape[0]]
        block[best < np.inf] = best[best < np.inf]
    on = ~np.isnan(scores)
    return RarityResult(scores=scores, on_manifold=on,
                        on_manifold_fraction=float(np.mean(on)))
