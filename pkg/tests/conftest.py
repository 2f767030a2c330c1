from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from pecusum.panel import FunctionalPanel, make_uniform_grid  # noqa: E402


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def step_panel(n, t, g, taus, jumps, noise=0.0, seed=0):
    """Panel with subject i jumping by ``jumps[i]`` (a curve) after ``taus[i]``."""
    r = np.random.default_rng(seed)
    grid = make_uniform_grid(g)
    data = noise * r.standard_normal((n, t, g))
    for i, (tau, d) in enumerate(zip(taus, jumps)):
        if tau is not None:
            data[i, tau:] += d
    return FunctionalPanel(data, grid)


@pytest.fixture
def make_step_panel():
    return step_panel


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
