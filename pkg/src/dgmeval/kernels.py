"""Kernel-matrix metrics: kernel distance (unbiased MMD), Vendi scores, and
the inception-style exp-KL score on probability matrices."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.special import xlogy

from . import _rng
from .errors import (
    DimensionMismatch,
    EigenFailure,
    InvalidDistribution,
    MissingLabels,
    SupportMismatch,
    TooFewSamples,
    ZeroNormRow,
)
from .store import EmbeddingSet, split_by_label, subsample

_BLOCK = 2048
# n above which a linear-kernel Vendi switches to the d x d dual Gram
_VENDI_DUAL_N = 20_000


@dataclass(frozen=True)
class KernelSpec:
    """Kernel for Gram computations; polynomial(3, 1/d, 1) is the default."""

    kind: str = "polynomial"      # "polynomial" | "linear"
    degree: int = 3
    gamma: float | None = None    # None resolves to 1/d at call time
    coef0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("polynomial", "linear"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind == "polynomial":
            if self.degree < 1:
                raise ValueError("degree must be >= 1")
            if self.gamma is not None and not self.gamma > 0:
                raise ValueError("gamma must be > 0")

    def resolve(self, d: int) -> "KernelSpec":
        if self.kind == "polynomial" and self.gamma is None:
            return replace(self, gamma=1.0 / d)
        return self


@dataclass
class VendiResult:
    score: float
    eigenvalues: np.ndarray  # of K/n: clamped, renormalized, descending
    kernel: KernelSpec
    normalized: bool


def _gram(X, Y, spec: KernelSpec):
    G = X @ Y.T
    if spec.kind == "polynomial":
        G = (spec.gamma * G + spec.coef0) ** spec.degree
    return G


def kernel_distance(gen: EmbeddingSet, real: EmbeddingSet,
                    kernel: KernelSpec | None = None,
                    subsets: int = 0, subset_size: int = 1000,
                    seed: int = 0) -> float:
    """Three-term unbiased MMD estimate between the two sets.

    subsets > 0 switches to the subset-averaging variant: the estimator is
    averaged over `subsets` seeded draws of `subset_size` rows per set.
    """
    if gen.d != real.d:
        raise DimensionMismatch(f"d mismatch: {gen.d} vs {real.d}")
    spec = (kernel or KernelSpec()).resolve(gen.d)
    if subsets > 0:
        if subset_size > min(gen.n, real.n):
            raise TooFewSamples(
                f"subset_size {subset_size} exceeds a set size "
                f"{min(gen.n, real.n)}"
            )
        acc = 0.0
        for s in range(subsets):
            g = subsample(gen, subset_size, _rng.derive_seed(seed, "kd", s, 0))
            r = subsample(real, subset_size, _rng.derive_seed(seed, "kd", s, 1))
            acc += _kd_full(g.data, r.data, spec)
        return acc / subsets
    return _kd_full(gen.data, real.data, spec)


def _kd_full(A, B, spec):
    n, m = A.shape[0], B.shape[0]
    if n < 2 or m < 2:
        raise TooFewSamples("the unbiased estimator needs n >= 2 and m >= 2")
    # swap to a canonical operand order so kd(g, r) == kd(r, g) bit-for-bit
    if _canonical_after(A, B):
        A, B = B, A
        n, m = m, n
    A = A.astype(np.float64, copy=False)
    B = B.astype(np.float64, copy=False)
    s_aa = _offdiag_sum(A, spec)
    s_bb = _offdiag_sum(B, spec)
    s_ab = 0.0
    for lo in range(0, n, _BLOCK):
        s_ab += float(_gram(A[lo:lo + _BLOCK], B, spec).sum())
    return (s_aa / (n * (n - 1))
            + s_bb / (m * (m - 1))
            - 2.0 * s_ab / (n * m))


def _canonical_after(A, B):
    if A.shape[0] != B.shape[0]:
        return A.shape[0] > B.shape[0]
    a = A.tobytes()
    b = B.tobytes()
    return a > b


def _offdiag_sum(X, spec):
    n = X.shape[0]
    total = 0.0
    trace = 0.0
    for lo in range(0, n, _BLOCK):
        G = _gram(X[lo:lo + _BLOCK], X, spec)
        total += float(G.sum())
        rows = G.shape[0]
        trace += float(G[np.arange(rows), lo + np.arange(rows)].sum())
    return total - trace


def vendi_score(es: EmbeddingSet, kernel: KernelSpec | None = None,
                normalize: bool = True) -> VendiResult:
    """exp of the eigenvalue entropy of K/n — the effective sample count.

    With the default linear kernel, rows are unit-normalized first so that
    k(x, x) = 1; the flag disables that (recorded in the result).
    """
    spec = (kernel or KernelSpec("linear")).resolve(es.d)
    X = es.data.astype(np.float64)
    n = X.shape[0]
    if normalize:
        norms = np.sqrt(np.einsum("ij,ij->i", X, X))
        zero = np.flatnonzero(norms == 0.0)
        if zero.size:
            raise ZeroNormRow(f"row {zero[0]} has zero norm; cannot normalize")
        X /= norms[:, None]

    try:
        if spec.kind == "linear" and n > _VENDI_DUAL_N and es.d < n:
            # dual Gram: X^T X / n shares the nonzero spectrum of X X^T / n
            w = np.linalg.eigvalsh((X.T @ X) / n)
            w = np.concatenate([np.zeros(n - es.d), w])
        else:
            K = _gram(X, X, spec) / n
            w = np.linalg.eigvalsh(0.5 * (K + K.T))
    except np.linalg.LinAlgError as exc:
        raise EigenFailure(f"eigenvalue computation failed: {exc}") from exc

    w = np.where(w < 0.0, 0.0, w)
    total = w.sum()
    if total <= 0.0:
        raise ZeroNormRow("kernel matrix has zero trace (all rows zero?)")
    w = np.sort(w / total)[::-1]
    entropy = float(-xlogy(w, w).sum())  # 0 log 0 = 0
    score = min(max(float(np.exp(entropy)), 1.0), float(n))
    return VendiResult(score=score, eigenvalues=w, kernel=spec,
                       normalized=normalize)


def per_class_vendi(es: EmbeddingSet, kernel: KernelSpec | None = None,
                    normalize: bool = True
                    ) -> tuple[float, list[tuple[int, float]]]:
    """Vendi per class group plus the unweighted mean across classes."""
    if es.labels is None:
        raise MissingLabels("per-class Vendi requires labels")
    per = [(cls, vendi_score(group, kernel, normalize).score)
           for cls, group in split_by_label(es)]
    mean = float(np.mean([s for _, s in per]))
    return mean, per


def inception_style_score(probs: np.ndarray,
                          marginal_mode: str = "generated_marginal",
                          train_freqs: np.ndarray | None = None) -> float:
    """exp(mean KL(p(y|x) || p(y))) over a row-stochastic matrix.

    p(y) is the mean of the rows ("generated_marginal") or a supplied
    training-label frequency vector ("train_frequencies").
    """
    P = _check_prob_matrix(np.asarray(probs, dtype=np.float64))
    if marginal_mode == "generated_marginal":
        q = P.mean(axis=0)
    elif marginal_mode == "train_frequencies":
        if train_freqs is None:
            raise InvalidDistribution("train_frequencies mode needs a frequency vector")
        q = np.asarray(train_freqs, dtype=np.float64)
        if q.shape != (P.shape[1],):
            raise DimensionMismatch(
                f"frequency vector length {q.shape} does not match C = {P.shape[1]}"
            )
        q = _check_prob_matrix(q[None, :])[0]
    else:
        raise ValueError(f"unknown marginal mode {marginal_mode!r}")

    used = P.sum(axis=0) > 0.0
    if np.any(used & (q == 0.0)):
        col = int(np.flatnonzero(used & (q == 0.0))[0])
        raise SupportMismatch(f"p(y|x) > 0 where p(y) = 0 at class {col}")
    with np.errstate(divide="ignore"):
        logq = np.where(q > 0.0, np.log(np.where(q > 0.0, q, 1.0)), 0.0)
    kl = (xlogy(P, P) - P * logq[None, :]).sum(axis=1)
    return float(np.exp(kl.mean()))


def _check_prob_matrix(P):
    if P.ndim != 2 or P.shape[1] < 1:
        raise InvalidDistribution(f"need an n x C matrix, got shape {P.shape}")
    if np.any(P < -1e-9) or np.any(P > 1.0 + 1e-9):
        raise InvalidDistribution("entries must lie in [0, 1]")
    sums = P.sum(axis=1)
    off = np.abs(sums - 1.0)
    if off.max(initial=0.0) > 1e-6:
        row = int(np.argmax(off))
        raise InvalidDistribution(f"row {row} sums to {sums[row]}, not 1")
    return np.clip(P, 0.0, 1.0)
