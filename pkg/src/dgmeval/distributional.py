"""Moment-based distribution distances: FD, FD-infinity, and the ASW form.

FD is the Wasserstein-2 distance between Gaussians fitted to the two sets.
FD-infinity extrapolates FD to infinite sample size with an OLS fit against
1/N over a 15-point grid.  ASW is the closed-form sliced-Wasserstein proxy
built from second moments only.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _rng, _threads
from .errors import DimensionMismatch, TooFewSamples
from .linalg import GaussianSummary, sq_norms, summarize_gaussian, trace_sqrt_product
from .store import EmbeddingSet, subsample

PAPER_GRID_LO = 5_000
PAPER_GRID_HI = 50_000
GRID_POINTS = 15


@dataclass
class FdInfinityFit:
    sizes: np.ndarray      # the 15 subsample sizes, strictly increasing
    values: np.ndarray     # FD at each size
    slope: float           # of FD vs 1/N
    intercept: float       # = FD at 1/N -> 0


def frechet_distance(real: GaussianSummary, gen: GaussianSummary) -> float:
    """||mu_r - mu_g||^2 + Tr(S_r + S_g - 2 (S_r S_g)^{1/2})."""
    if real.mean.shape != gen.mean.shape:
        raise DimensionMismatch(
            f"d mismatch: {real.mean.shape[0]} vs {gen.mean.shape[0]}"
        )
    diff = real.mean - gen.mean
    val = float(diff @ diff
                + np.trace(real.cov) + np.trace(gen.cov)
                - 2.0 * trace_sqrt_product(real.cov, gen.cov))
    if -1e-8 <= val < 0.0:
        val = 0.0
    return val


def fd_infinity(real: EmbeddingSet, gen: EmbeddingSet, seed: int = 0,
                repeats: int = 1) -> tuple[float, FdInfinityFit]:
    """FD extrapolated to N = infinity.

    Uses the 5k..50k grid when both sets allow it, otherwise a proportional
    grid over [max(100, n/10), n].  One seeded subsample pair per grid point
    (`repeats` > 1 averages several draws per point).
    """
    if real.d != gen.d:
        raise DimensionMismatch(f"d mismatch: {real.d} vs {gen.d}")
    n = min(real.n, gen.n)
    if n >= PAPER_GRID_HI:
        sizes = np.linspace(PAPER_GRID_LO, PAPER_GRID_HI, GRID_POINTS)
    else:
        lo = max(100, n // 10)
        if lo >= n:
            raise TooFewSamples(
                f"grid needs sizes in [{lo}, n] with n > {lo}, got n = {n}"
            )
        sizes = np.linspace(lo, n, GRID_POINTS)
    sizes = np.unique(np.rint(sizes).astype(np.int64))
    if sizes.size < GRID_POINTS:
        raise TooFewSamples(
            f"cannot place {GRID_POINTS} distinct grid sizes below n = {n}"
        )

    def one_point(i):
        acc = 0.0
        for rep in range(repeats):
            sub_r = subsample(real, int(sizes[i]), _rng.derive_seed(seed, "fdinf", i, rep, 0))
            sub_g = subsample(gen, int(sizes[i]), _rng.derive_seed(seed, "fdinf", i, rep, 1))
            acc += frechet_distance(summarize_gaussian(sub_r), summarize_gaussian(sub_g))
        return acc / repeats

    workers = min(_threads.max_workers(), GRID_POINTS)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            values = np.array(list(pool.map(one_point, range(sizes.size))))
    else:
        values = np.array([one_point(i) for i in range(sizes.size)])

    if values.max() - values.min() <= 1e-12:
        # degenerate fit: constant series, intercept is the constant
        slope, intercept = 0.0, float(values[0])
    else:
        slope, intercept = np.polyfit(1.0 / sizes, values, 1)
    fit = FdInfinityFit(sizes=sizes, values=values,
                        slope=float(slope), intercept=float(intercept))
    return float(intercept), fit


def fit_fd_series(sizes, values) -> FdInfinityFit:
    """OLS of an externally supplied (N, FD) series against 1/N."""
    sizes = np.asarray(sizes, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if sizes.shape != values.shape or sizes.ndim != 1:
        raise DimensionMismatch("sizes and values must be matching 1-D series")
    if values.max() - values.min() <= 1e-12:
        slope, intercept = 0.0, float(values[0])
    else:
        slope, intercept = np.polyfit(1.0 / sizes, values, 1)
    return FdInfinityFit(sizes=sizes, values=values,
                         slope=float(slope), intercept=float(intercept))


def asw(real: EmbeddingSet, gen: EmbeddingSet) -> float:
    """Closed-form approximate sliced Wasserstein from second moments.

    M2(X) = mean ||x - mu||^2 + ||mu||^2, which collapses to mean ||x||^2;
    the score is the 1-D W2 between N(0, M2_g/d) and N(0, M2_r/d) plus the
    dimension-averaged mean offset.
    """
    if real.d != gen.d:
        raise DimensionMismatch(f"d mismatch: {real.d} vs {gen.d}")
    if real.n < 2 or gen.n < 2:
        raise TooFewSamples("need n, m >= 2")
    d = real.d
    m2_r = float(sq_norms(real.data).mean())
    m2_g = float(sq_norms(gen.data).mean())
    mu_r = real.data.mean(axis=0, dtype=np.float64)
    mu_g = gen.data.mean(axis=0, dtype=np.float64)
    diff = mu_g - mu_r
    return float((np.sqrt(m2_g / d) - np.sqrt(m2_r / d)) ** 2 + (diff @ diff) / d)
