"""Counter-based splittable randomness.

Every stochastic operation derives its own Philox stream from a master seed
and a structured path, so independent computations (grid points, scenario
stages, metric invocations) can run in any order -- or in parallel -- without
changing results.  Normal variates go through the inverse CDF so the exact
bit pattern depends only on the uniform stream, not on a rejection loop.
"""

from __future__ import annotations

import zlib

import numpy as np
from scipy.special import ndtri

_MASK64 = (1 << 64) - 1
_INV_2_53 = float(2.0**-53)


def _coerce_key(part) -> int:
    if isinstance(part, str):
        return zlib.crc32(part.encode("utf-8"))
    return int(part) & _MASK64


def substream(seed: int, *path) -> np.random.Generator:
    """Philox generator for the sub-stream named by `path` under `seed`."""
    ss = np.random.SeedSequence(int(seed) & _MASK64,
                                spawn_key=tuple(_coerce_key(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


def derive_seed(seed: int, *path) -> int:
    """Collapse a sub-stream identity to a plain 64-bit seed."""
    ss = np.random.SeedSequence(int(seed) & _MASK64,
                                spawn_key=tuple(_coerce_key(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def uniform_open(rng: np.random.Generator, shape) -> np.ndarray:
    # (k + 0.5) / 2^53 lies strictly inside (0, 1), so ndtri stays finite
    k = rng.integers(0, 1 << 53, size=shape, dtype=np.int64)
    return (k + 0.5) * _INV_2_53


def standard_normal(rng: np.random.Generator, shape) -> np.ndarray:
    """Gaussian draws via the inverse-CDF transform (bit-stable)."""
    return ndtri(uniform_open(rng, shape))
