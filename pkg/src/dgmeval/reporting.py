"""Metric report aggregation and Pearson correlation against human ratings.

Correlations use pairwise deletion: each cell is computed over the models
where both series are available, and cells with fewer than three shared
models are reported as unavailable rather than failing the whole matrix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.special import betainc

from .errors import (
    ConstantSeries,
    InsufficientOverlap,
    LengthMismatch,
    TooFewPoints,
)

STRONG_R = 0.5
SIGNIFICANT_P = 0.05


@dataclass
class MetricReport:
    """One row of a leaderboard: metric values plus the exact configuration
    that produced them."""

    model_id: str
    dataset_id: str
    values: dict = field(default_factory=dict)          # name -> float | None
    hyperparameters: dict = field(default_factory=dict)  # name -> dict
    errors: dict = field(default_factory=dict)          # name -> message
    details: dict = field(default_factory=dict)         # name -> structure
    timestamp: str = ""

    def to_json(self) -> str:
        return json.dumps({
            "model_id": self.model_id,
            "dataset_id": self.dataset_id,
            "values": self.values,
            "hyperparameters": self.hyperparameters,
            "errors": self.errors,
            "details": self.details,
            "timestamp": self.timestamp,
        }, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricReport":
        raw = json.loads(text)
        return cls(model_id=raw["model_id"], dataset_id=raw["dataset_id"],
                   values=raw.get("values", {}),
                   hyperparameters=raw.get("hyperparameters", {}),
                   errors=raw.get("errors", {}),
                   details=raw.get("details", {}),
                   timestamp=raw.get("timestamp", ""))


@dataclass
class HumanEvalRecord:
    """Mean human error rate for one model in the real-vs-generated task."""

    model_id: str
    error_rate: float
    stderr: float = 0.0
    participants: int = 0

    def __post_init__(self):
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError(f"error rate {self.error_rate} outside [0, 1]")
        if self.stderr < 0.0:
            raise ValueError("standard error must be >= 0")
        lo = self.error_rate - 3.0 * self.stderr
        hi = self.error_rate + 3.0 * self.stderr
        if lo < -0.1 or hi > 1.1:
            raise ValueError(
                f"error rate {self.error_rate} +- 3 * {self.stderr} leaves the "
                "[-0.1, 1.1] sanity band"
            )


@dataclass
class CorrelationSummary:
    names: tuple
    n: int
    r: float
    p: float
    strong_and_significant: bool


def pearson(x, y, names: tuple = ("x", "y")) -> CorrelationSummary:
    """Product-moment r with a two-sided t-test p-value.

    p comes from the regularized incomplete beta form of the Student-t CDF
    with n-2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise LengthMismatch(f"series shapes differ: {x.shape} vs {y.shape}")
    n = x.size
    if n < 3:
        raise TooFewPoints(f"need n >= 3, got {n}")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(dx @ dx)
    sy = float(dy @ dy)
    if sx == 0.0 or sy == 0.0:
        raise ConstantSeries("a constant series has no defined correlation")
    r = float(np.clip((dx @ dy) / np.sqrt(sx * sy), -1.0, 1.0))
    if abs(r) == 1.0:
        p = 0.0
    else:
        nu = n - 2
        t2 = r * r * nu / (1.0 - r * r)
        p = float(betainc(nu / 2.0, 0.5, nu / (nu + t2)))
    return CorrelationSummary(names=names, n=n, r=r, p=p,
                              strong_and_significant=(abs(r) >= STRONG_R
                                                      and p <= SIGNIFICANT_P))


@dataclass
class ReportCorrelations:
    dataset_id: str
    metric_names: list
    vs_human: dict    # metric -> CorrelationSummary | None
    matrix: dict      # (metric_a, metric_b) -> CorrelationSummary | None
    models: list


def correlate_reports(reports: list[MetricReport],
                      human: list[HumanEvalRecord]) -> ReportCorrelations:
    """Per-metric correlation with human error plus the metric x metric
    matrix, over the model intersection with pairwise deletion."""
    by_model = {}
    for rep in reports:
        by_model[rep.model_id] = rep
    rates = {h.model_id: h.error_rate for h in human}
    shared = sorted(set(by_model) & set(rates))
    if len(shared) < 3:
        raise InsufficientOverlap(
            f"need >= 3 models shared between reports and human records, "
            f"got {len(shared)}"
        )
    datasets = {by_model[m].dataset_id for m in shared}
    dataset_id = ",".join(sorted(datasets))

    names = sorted({name for m in shared for name, v in by_model[m].values.items()
                    if v is not None})

    def series(name):
        return {m: by_model[m].values.get(name) for m in shared
                if by_model[m].values.get(name) is not None}

    vs_human = {}
    for name in names:
        s = series(name)
        models = sorted(s)
        if len(models) < 3:
            vs_human[name] = None
            continue
        vs_human[name] = _safe_pearson([s[m] for m in models],
                                       [rates[m] for m in models],
                                       (name, "human_error_rate"))

    matrix = {}
    for i, a in enumerate(names):
        sa = series(a)
        for b in names[i:]:
            sb = series(b)
            models = sorted(set(sa) & set(sb))
            if len(models) < 3:
                cell = None
            else:
                cell = _safe_pearson([sa[m] for m in models],
                                     [sb[m] for m in models], (a, b))
            matrix[(a, b)] = cell
            matrix[(b, a)] = cell
    return ReportCorrelations(dataset_id=dataset_id, metric_names=names,
                              vs_human=vs_human, matrix=matrix, models=shared)


def _safe_pearson(x, y, names):
    try:
        return pearson(x, y, names)
    except ConstantSeries:
        return None
