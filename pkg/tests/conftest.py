"""Shared fixtures and the acceptance summary hook."""

import time

import numpy as np
import pytest

from uxeval.core import Dataset, Instance, validate_dataset
from uxeval.oracle import LinearModel, seeded_mlp

_ACCEPTANCE_BUDGET_S = 180.0
_session_start = time.monotonic()


@pytest.fixture
def linear_identity():
    """The hand-enumerated deletion scenario: w=(1,2,0), identity link."""
    return LinearModel([[1.0, 2.0, 0.0]], [0.0])


@pytest.fixture
def ones_instance():
    return Instance([1.0, 1.0, 1.0])


@pytest.fixture
def zeros_baseline():
    return Instance([0.0, 0.0, 0.0])


@pytest.fixture
def mlp8():
    return seeded_mlp(8, 10, 3, seed=5)


def make_tabular(X, groups=None, labels=None):
    X = np.asarray(X, dtype=float)
    return validate_dataset(
        Dataset(
            instances=tuple(Instance(X[i], id=i) for i in range(X.shape[0])),
            kind="tabular",
            group_labels=tuple(groups) if groups is not None else None,
            class_labels=tuple(labels) if labels is not None else None,
        )
    )


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion, plus the runtime budget."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            if "test_acceptance.py" not in str(getattr(rep, "nodeid", "")):
                continue
            name = rep.nodeid.split("::")[-1]
            outcome = "PASS" if status == "passed" else "FAIL"
            lines.append((name, outcome))
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome in sorted(lines):
        terminalreporter.write_line(f"[{outcome}] {name}")
    elapsed = time.monotonic() - _session_start
    verdict = "PASS" if elapsed < _ACCEPTANCE_BUDGET_S else "FAIL"
    terminalreporter.write_line(
        f"[{verdict}] suite runtime {elapsed:.1f} s (budget {_ACCEPTANCE_BUDGET_S:.0f} s)"
    )
