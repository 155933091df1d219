"""Controlled synthetic scenarios for validating the memorization metrics,
plus plain Gaussian clouds for bias and stability studies.

Every scenario is a pure function of (kind, seed): the mixture parameters
and each of the train/test/gen stages draw from separately derived streams,
so regenerating any part is order-independent.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _rng
from .store import EmbeddingSet

SCENARIO_KINDS = ("true_distribution", "shrinkage", "memorized", "underfit")
UNDERFIT_SCALES = (1.5, 3.0, 4.5)
_COMPONENTS = 5
_DIM = 2
_COV_LO = 0.01
_COV_HI = 0.09


@dataclass
class SyntheticScenario:
    """A 5-component 2-D Gaussian mixture with per-kind generator behavior."""

    kind: str
    seed: int = 0
    scale: float | None = None       # underfit std multiplier
    n_train: int = 1000
    n_test: int = 1000
    n_gen: int = 1000
    scale_unchecked: bool = False    # accept any positive underfit scale

    def __post_init__(self):
        if self.kind not in SCENARIO_KINDS:
            raise ValueError(
                f"unknown scenario kind {self.kind!r}; choose from {SCENARIO_KINDS}"
            )
        if min(self.n_train, self.n_test, self.n_gen) < 1:
            raise ValueError("counts must be positive")
        if self.kind == "underfit":
            if self.scale is None:
                raise ValueError(f"underfit needs a scale from {UNDERFIT_SCALES}")
            if self.scale_unchecked:
                if not self.scale > 0:
                    raise ValueError("scale must be positive")
            elif self.scale not in UNDERFIT_SCALES:
                raise ValueError(
                    f"scale {self.scale} not in {UNDERFIT_SCALES}; "
                    "pass scale_unchecked to allow arbitrary positive values"
                )
        elif self.scale is not None:
            raise ValueError(f"scale only applies to underfit, not {self.kind!r}")


def mixture_params(scenario: SyntheticScenario):
    """(means, stds): 5 x 2 component means and per-axis std deviations."""
    rng = _rng.substream(scenario.seed, "params")
    means = _rng.standard_normal(rng, (_COMPONENTS, _DIM))
    diag = _COV_LO + (_COV_HI - _COV_LO) * _rng.uniform_open(rng, (_COMPONENTS, _DIM))
    return means, np.sqrt(diag)


def generate_scenario(scenario: SyntheticScenario
                      ) -> tuple[EmbeddingSet, EmbeddingSet, EmbeddingSet]:
    """Returns (train, test, gen) for the scenario, deterministically."""
    means, stds = mixture_params(scenario)
    train = _mixture_draw(_rng.substream(scenario.seed, "train"),
                          scenario.n_train, means, stds)
    test = _mixture_draw(_rng.substream(scenario.seed, "test"),
                         scenario.n_test, means, stds)
    grng = _rng.substream(scenario.seed, "gen")
    if scenario.kind == "true_distribution":
        gen = _mixture_draw(grng, scenario.n_gen, means, stds)
    elif scenario.kind == "shrinkage":
        comp = grng.integers(0, _COMPONENTS, size=scenario.n_gen)
        gen = means[comp].astype(np.float32)
    elif scenario.kind == "memorized":
        rows = grng.integers(0, scenario.n_train, size=scenario.n_gen)
        gen = train[rows]
    else:  # underfit
        gen = _mixture_draw(grng, scenario.n_gen, means, stds * scenario.scale)

    tag = scenario.kind if scenario.scale is None else f"{scenario.kind}({scenario.scale})"
    make = lambda X, stage: EmbeddingSet(
        data=X, encoder_id="synthetic",
        source_id=f"{tag}:seed={scenario.seed}:{stage}")
    return make(train, "train"), make(test, "test"), make(gen, "gen")


def _mixture_draw(rng, n, means, stds):
    comp = rng.integers(0, means.shape[0], size=n)
    z = _rng.standard_normal(rng, (n, means.shape[1]))
    return (means[comp] + stds[comp] * z).astype(np.float32)


def gaussian_cloud(n: int, d: int, mean_offset: float = 0.0,
                   cov_scale: float = 1.0, seed: int = 0) -> EmbeddingSet:
    """n i.i.d. draws from N(mean_offset * 1, cov_scale * I), float32."""
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    rng = _rng.substream(seed, "cloud")
    sd = np.sqrt(cov_scale)
    out = np.empty((n, d), dtype=np.float32)
    for lo in range(0, n, 4096):
        rows = min(4096, n - lo)
        z = _rng.standard_normal(rng, (rows, d))
        out[lo:lo + rows] = mean_offset + sd * z
    return EmbeddingSet(data=out, encoder_id="synthetic",
                        source_id=f"cloud(n={n},d={d},offset={mean_offset},"
                                  f"scale={cov_scale},seed={seed})")
