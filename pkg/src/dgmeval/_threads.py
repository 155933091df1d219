"""Worker-count policy for the few internally parallel loops."""

from __future__ import annotations

import os


def max_workers() -> int:
    """Worker cap: DGM_THREADS env var if set, else the CPU count."""
    raw = os.environ.get("DGM_THREADS", "").strip()
    if raw:
        try:
            n = int(raw)
        except ValueError:
            n = 1
        return max(1, n)
    return max(1, os.cpu_count() or 1)
