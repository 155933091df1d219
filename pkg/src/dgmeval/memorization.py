"""Memorization diagnostics: calibrated nearest-neighbor distances, AuthPct,
the cell-wise Mann-Whitney copying score C_T, and the mixture-KDE likelihood
metrics (FLS / FLS-POG).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp
from scipy.stats import rankdata

from . import _rng
from .errors import (
    DegenerateNeighborhood,
    DimensionMismatch,
    EmptyInput,
    MissingLabels,
    NoAdmissibleCells,
    TooFewTrainRows,
)
from .linalg import iter_sqdist_blocks, pca_fit_project
from .store import EmbeddingSet

_VAR_FLOOR = 1e-8  # floor for KDE variances and calibration denominators


@dataclass
class MemorizationConfig:
    """k defaults to 50, or 3 when restricted to matching labels; tau is the
    hand-tuned calibrated-distance threshold and has no default."""

    tau: float
    k: int | None = None
    intra_class: bool = False

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError("tau must be > 0")
        if self.k is not None and self.k < 1:
            raise ValueError("k must be >= 1")

    @property
    def effective_k(self) -> int:
        if self.k is not None:
            return self.k
        return 3 if self.intra_class else 50


@dataclass
class MemorizationMatch:
    gen_index: int
    train_index: int
    l: float
    memorized: bool


@dataclass
class CtConfig:
    cells: int = 3
    pca_components: int | None = None  # None resolves to min(64, d)
    min_cell_count: int = 2
    seed: int = 0
    weight_by: str = "test"            # "test" | "generated"

    def __post_init__(self):
        if self.cells < 1:
            raise ValueError("cells must be >= 1")
        if self.weight_by not in ("test", "generated"):
            raise ValueError("weight_by must be 'test' or 'generated'")


@dataclass
class MogKde:
    centers: np.ndarray    # (n_c, d) float64
    log_vars: np.ndarray   # (n_c,) isotropic log-variances
    trace: list = field(default_factory=list)  # objective per iteration


def calibrated_l2(gen: EmbeddingSet, train: EmbeddingSet,
                  cfg: MemorizationConfig) -> list[MemorizationMatch]:
    """Nearest-train distance of every generated row, divided by the mean
    distance from that training row to its own k nearest training rows."""
    if gen.d != train.d:
        raise DimensionMismatch(f"d mismatch: {gen.d} vs {train.d}")
    k = cfg.effective_k
    if not cfg.intra_class:
        if train.n < k + 1:
            raise TooFewTrainRows(f"need at least k+1 = {k + 1} train rows, got {train.n}")
        nn_idx, nn_sq = _nearest(gen.data, train.data)
        denom = _calibration_denominators(train.data, nn_idx, k)
    else:
        if gen.labels is None or train.labels is None:
            raise MissingLabels("intra-class calibration requires labels on both sets")
        nn_idx = np.empty(gen.n, dtype=np.int64)
        nn_sq = np.empty(gen.n)
        denom = np.empty(gen.n)
        for cls in np.unique(gen.labels):
            g_rows = np.flatnonzero(gen.labels == cls)
            t_rows = np.flatnonzero(train.labels == cls)
            if t_rows.size < k + 1:
                raise TooFewTrainRows(
                    f"class {cls}: need at least k+1 = {k + 1} train rows, "
                    f"got {t_rows.size}"
                )
            sub_idx, sub_sq = _nearest(gen.data[g_rows], train.data[t_rows])
            nn_idx[g_rows] = t_rows[sub_idx]
            nn_sq[g_rows] = sub_sq
            sub_denom = _calibration_denominators(train.data[t_rows], sub_idx, k)
            denom[g_rows] = sub_denom
    matches = []
    for i in range(gen.n):
        if denom[i] == 0.0:
            raise DegenerateNeighborhood(
                f"train row {nn_idx[i]}: all {k} calibration neighbors coincide"
            )
        l = float(np.sqrt(nn_sq[i]) / denom[i])
        matches.append(MemorizationMatch(gen_index=i, train_index=int(nn_idx[i]),
                                         l=l, memorized=l < cfg.tau))
    return matches


def _nearest(queries, reference):
    """(argmin index, squared distance) of each query against reference rows."""
    idx = np.empty(queries.shape[0], dtype=np.int64)
    sq = np.empty(queries.shape[0])
    for lo, block in iter_sqdist_blocks(queries, reference):
        idx[lo:lo + block.shape[0]] = block.argmin(axis=1)
        sq[lo:lo + block.shape[0]] = block[np.arange(block.shape[0]),
                                           idx[lo:lo + block.shape[0]]]
    return idx, sq


def _calibration_denominators(train, needed_idx, k):
    """Mean distance from each needed train row to its k nearest train rows."""
    uniq, inverse = np.unique(needed_idx, return_inverse=True)
    means = np.empty(uniq.size)
    for lo, sq in iter_sqdist_blocks(train[uniq], train):
        rows = sq.shape[0]
        sq[np.arange(rows), uniq[lo:lo + rows]] = np.inf  # exclude self
        part = np.partition(sq, k - 1, axis=1)[:, :k]
        means[lo:lo + rows] = np.sqrt(part).mean(axis=1)
    return means[inverse]


def memorization_ratio(matches: list[MemorizationMatch]) -> float:
    """Fraction of matches with l below tau."""
    if not matches:
        raise EmptyInput("no matches given")
    return float(np.mean([m.memorized for m in matches]))


def auth_pct(gen: EmbeddingSet, train: EmbeddingSet) -> float:
    """Percentage of generated rows that are authentic.

    A row is inauthentic when it lies strictly closer to its nearest training
    row than that row lies to its own nearest training neighbor.
    """
    if gen.d != train.d:
        raise DimensionMismatch(f"d mismatch: {gen.d} vs {train.d}")
    if train.n < 2:
        raise TooFewTrainRows(f"need at least 2 train rows, got {train.n}")
    gap_sq = _self_nn_sq(train.data)
    nn_idx, nn_sq = _nearest(gen.data, train.data)
    inauthentic = nn_sq < gap_sq[nn_idx]
    return float(100.0 * np.mean(~inauthentic))


def _self_nn_sq(X):
    out = np.empty(X.shape[0])
    for lo, sq in iter_sqdist_blocks(X, X):
        rows = sq.shape[0]
        sq[np.arange(rows), lo + np.arange(rows)] = np.inf
        out[lo:lo + rows] = sq.min(axis=1)
    return out


# ---------------------------------------------------------------------------
# C_T score


def ct_score(train: EmbeddingSet, gen: EmbeddingSet, test: EmbeddingSet,
             cfg: CtConfig | None = None, modified: bool = False) -> float:
    """Cell-averaged Mann-Whitney z of gen-to-train vs test-to-train NN
    distances; strongly negative means the generator copies training data.

    modified=True runs the identical pipeline with the train and gen roles
    swapped, which is insensitive to mode shrinkage.
    """
    score, _ = ct_score_full(train, gen, test, cfg, modified)
    return score


def ct_score_full(train, gen, test, cfg=None, modified=False):
    cfg = cfg or CtConfig()
    if modified:
        return ct_score_full(gen, train, test, cfg, False)
    if not (train.d == gen.d == test.d):
        raise DimensionMismatch(
            f"d mismatch: train {train.d}, gen {gen.d}, test {test.d}"
        )
    comps = cfg.pca_components if cfg.pca_components is not None else min(64, train.d)
    T, G, S = pca_fit_project(train, [train, gen, test], comps)

    centers = _kmeans(T.data, cfg.cells, cfg.seed)
    gen_cell = _assign(G.data, centers)
    test_cell = _assign(S.data, centers)

    gen_sq = _min_sq(G.data, T.data)
    test_sq = _min_sq(S.data, T.data)

    cells = []
    for c in range(cfg.cells):
        g = gen_sq[gen_cell == c]
        t = test_sq[test_cell == c]
        if g.size < cfg.min_cell_count or t.size < cfg.min_cell_count:
            continue
        cells.append({"cell": c, "n_gen": int(g.size), "n_test": int(t.size),
                      "z": _mann_whitney_z(g, t)})
    if not cells:
        raise NoAdmissibleCells(
            f"no cell has >= {cfg.min_cell_count} generated and test points"
        )
    key = "n_test" if cfg.weight_by == "test" else "n_gen"
    total = float(sum(c[key] for c in cells))
    score = float(sum(c[key] / total * c["z"] for c in cells))
    for c in cells:
        c["weight"] = c[key] / total
    return score, cells


def _min_sq(queries, reference):
    out = np.empty(queries.shape[0])
    for lo, sq in iter_sqdist_blocks(queries, reference):
        out[lo:lo + sq.shape[0]] = sq.min(axis=1)
    return out


def _assign(X, centers):
    d2 = (np.einsum("ij,ij->i", X, X)[:, None]
          + np.einsum("ij,ij->i", centers, centers)[None, :]
          - 2.0 * X @ centers.T)
    return d2.argmin(axis=1)


def _mann_whitney_z(first, second):
    """z-statistic of the U test; midranks for ties, no tie variance term."""
    n1, n2 = first.size, second.size
    ranks = rankdata(np.concatenate([first, second]), method="average")
    u = float(ranks[:n1].sum()) - n1 * (n1 + 1) / 2.0
    mean_u = n1 * n2 / 2.0
    sd_u = np.sqrt(n1 * n2 * (n1 + n2 + 1) / 12.0)
    return float((u - mean_u) / sd_u)


def _kmeans(X, k, seed, iters=300, tol=1e-6):
    """Seeded k-means++ then Lloyd with deterministic empty-cell handling."""
    n = X.shape[0]
    k = min(k, n)
    rng = _rng.substream(seed, "kmeans")
    centers = _kmeanspp_init(X, k, rng)
    tol_scaled = tol * float(np.mean(np.var(X, axis=0)))
    assign = _assign(X, centers)
    for _ in range(iters):
        new_centers = np.empty_like(centers)
        empties = [c for c in range(k) if not (assign == c).any()]
        for c in range(k):
            rows = assign == c
            if rows.any():
                new_centers[c] = X[rows].mean(axis=0)
        if empties:
            # re-seed empty cells on the points farthest from their centers,
            # lowest cell id first, each point used at most once
            diff = X - centers[assign]
            d2 = np.einsum("ij,ij->i", diff, diff)
            order = np.argsort(-d2, kind="stable")
            for c, far in zip(empties, order):
                new_centers[c] = X[far]
        shift = float(np.einsum("ij,ij->", new_centers - centers, new_centers - centers))
        centers = new_centers
        assign = _assign(X, centers)
        if shift <= tol_scaled:
            break
    return centers


def _kmeanspp_init(X, k, rng):
    n = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[int(rng.integers(n))]
    d2 = np.einsum("ij,ij->i", X - centers[0], X - centers[0])
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            idx = int(rng.integers(n))
        else:
            cum = np.cumsum(d2 / total)
            idx = int(min(np.searchsorted(cum, rng.random()), n - 1))
        centers[j] = X[idx]
        d2 = np.minimum(d2, np.einsum("ij,ij->i", X - centers[j], X - centers[j]))
    return centers


# ---------------------------------------------------------------------------
# FLS


def fit_mog_kde(gen: EmbeddingSet, train: EmbeddingSet,
                iters: int = 50, step: float = 0.5) -> MogKde:
    """Mixture-of-Gaussians KDE centered on the generated rows.

    One isotropic variance per center, initialized from the squared distance
    to the center's nearest training row (floored at 1e-8), then tuned by
    gradient ascent on the mean training log-likelihood.  A step that would
    lower the objective is halved up to five times, so the trace never
    decreases.
    """
    if gen.d != train.d:
        raise DimensionMismatch(f"d mismatch: {gen.d} vs {train.d}")
    centers = gen.data.astype(np.float64)
    T = train.data.astype(np.float64)
    d = centers.shape[1]
    D2 = _full_sqdist(T, centers)  # (n_train, n_centers)

    log_floor = np.log(_VAR_FLOOR)
    log_vars = np.log(np.maximum(D2.min(axis=0), _VAR_FLOOR))
    obj = _mog_objective(D2, log_vars, d)
    trace = [obj]
    for _ in range(iters):
        grad = _mog_gradient(D2, log_vars, d)
        s = step
        best = None
        for _halving in range(6):  # initial step plus up to 5 halvings
            cand = np.maximum(log_vars + s * grad, log_floor)
            cand_obj = _mog_objective(D2, cand, d)
            if cand_obj >= obj:
                best = (cand, cand_obj)
                break
            s *= 0.5
        if best is not None:
            log_vars, obj = best
        trace.append(obj)
    return MogKde(centers=centers, log_vars=log_vars, trace=trace)


def _full_sqdist(X, Y):
    n = X.shape[0]
    out = np.empty((n, Y.shape[0]))
    for lo, sq in iter_sqdist_blocks(X, Y):
        out[lo:lo + sq.shape[0]] = sq
    return out


def _component_logpdf(D2, log_vars, d):
    # log N(x; c, sigma_c^2 I) for precomputed squared distances
    inv2var = 0.5 * np.exp(-log_vars)
    return (-0.5 * d * (np.log(2.0 * np.pi) + log_vars))[None, :] - D2 * inv2var[None, :]


def _mog_objective(D2, log_vars, d):
    lp = _component_logpdf(D2, log_vars, d)
    return float(np.mean(logsumexp(lp, axis=1) - np.log(lp.shape[1])))


def _mog_gradient(D2, log_vars, d):
    lp = _component_logpdf(D2, log_vars, d)
    lse = logsumexp(lp, axis=1)
    resp = np.exp(lp - lse[:, None])
    dlp = -0.5 * d + D2 * (0.5 * np.exp(-log_vars))[None, :]
    return (resp * dlp).mean(axis=0)


def fls_metrics(kde: MogKde, train: EmbeddingSet, test: EmbeddingSet,
                affine: tuple[float, float] = (1.0, 0.0)
                ) -> tuple[float, float]:
    """(fls, pog): the dimension-normalized mean test log-likelihood under
    the KDE (through the affine map a*x + b), and the percentage of centers
    assigning the training set a strictly higher per-center likelihood than
    the test set."""
    d = kde.centers.shape[1]
    if train.d != d or test.d != d:
        raise DimensionMismatch(f"d mismatch: kde {d}, train {train.d}, test {test.d}")
    a, b = affine

    test_lp = _component_logpdf(_full_sqdist(test.data.astype(np.float64), kde.centers),
                                kde.log_vars, d)
    mean_ll = float(np.mean(logsumexp(test_lp, axis=1) - np.log(kde.centers.shape[0])))
    fls = a * (mean_ll / d) + b

    # per-center log of the average component likelihood over each set
    train_lp = _component_logpdf(_full_sqdist(train.data.astype(np.float64), kde.centers),
                                 kde.log_vars, d)
    center_train = logsumexp(train_lp, axis=0) - np.log(train.n)
    center_test = logsumexp(test_lp, axis=0) - np.log(test.n)
    pog = float(100.0 * np.mean(center_train > center_test))
    return fls, pog
