"""Shared fixtures: seeded batches of unit-norm features with label paths."""

import numpy as np
import pytest

from hicle.hierarchy import LabelPath

#: One PASS/FAIL line per acceptance criterion, echoed after the test run
#: (capture would otherwise swallow them for passing tests).
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def unit_features(gen, n, d):
    f = gen.standard_normal((n, d))
    return f / np.linalg.norm(f, axis=1, keepdims=True)


def random_paths(gen, n, level_counts, views=2):
    """n paths over the given per-level branching; consecutive rows that share
    a sample_id model two views of one image."""
    paths = []
    for i in range(n):
        labels = tuple(int(gen.integers(c)) for c in level_counts)
        paths.append(LabelPath(labels=labels, sample_id=i // views))
    return paths


@pytest.fixture
def gen():
    return np.random.default_rng(12345)
