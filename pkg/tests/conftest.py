from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from segdiag.core import Taxonomy, validate_taxonomy


def make_taxonomy(n=4, background=True, groups=None, ignore_id=255):
    classes = tuple((k, f"c{k}") for k in range(n))
    return validate_taxonomy(
        Taxonomy(classes, ignore_id, 0 if background else None, groups or {})
    )


@pytest.fixture
def tax():
    # 0 background, (1, 2) similar, 3 and 4 unrelated
    return make_taxonomy(5, groups={"pair": (1, 2)})


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria report one line each, shown after the test run
ACCEPTANCE_LINES = {}


def record_acceptance(number, ok, detail):
    """``ok`` None marks a criterion that is deliberately not run."""
    status = "SKIP" if ok is None else "PASS" if ok else "FAIL"
    line = f"[{status}] criterion {number}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
