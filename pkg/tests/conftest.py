import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from sensorformer.model import ModelConfig  # noqa: E402
from sensorformer.patching import PatchConfig  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def tiny_cfg():
    """D-agnostic double-precision model with N = 5 patches and no dropout."""
    return ModelConfig(
        patch=PatchConfig(L=16, P=4, S=4, d_model=8), H=4, blocks=1, heads=2,
        dropout=0.0, dtype="float64", seed=3,
    )


def etth1_path():
    """Location of ETTh1.csv, if it has been downloaded."""
    candidates = [
        os.environ.get("SENSORFORMER_ETTH1", ""),
        os.path.join(os.path.dirname(__file__), "..", "data", "ETTh1.csv"),
    ]
    for c in candidates:
        if c and os.path.exists(c):
            return c
    return None


ACCEPTANCE_LINES = []


@pytest.fixture
def report():
    """Record one PASS/FAIL/SKIP line for an acceptance criterion."""

    def _report(number, status, detail):
        line = f"criterion {number:>2}: {status:<4} {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
