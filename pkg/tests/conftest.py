import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))  # make oracles importable

from dgmeval.store import EmbeddingSet

# single worker keeps unit-test timings honest on shared machines
os.environ.setdefault("DGM_THREADS", "1")


def make_set(rows, labels=None, **meta) -> EmbeddingSet:
    data = np.ascontiguousarray(np.asarray(rows, dtype=np.float64),
                                dtype=np.float32)
    if data.ndim == 1:
        data = data[:, None]
    return EmbeddingSet(data=data, labels=labels, **meta)


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


# ---------------------------------------------------------------------------
# acceptance summary: one pass/fail line per criterion check


_ACCEPTANCE_RESULTS = []


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(label): names an acceptance check for the summary"
    )


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    if "test_acceptance" not in report.nodeid:
        return
    _ACCEPTANCE_RESULTS.append((report.nodeid, report.outcome))


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance checks")
    for nodeid, outcome in _ACCEPTANCE_RESULTS:
        name = nodeid.split("::")[-1]
        label = name.removeprefix("test_").replace("_", " ")
        verdict = "PASS" if outcome == "passed" else "FAIL"
        tr.write_line(f"[{verdict}] {label}")
