import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20140623)


def orthonormal_design(n, p, seed=0):
    """n x p design with X'X/n = I exactly (up to rounding)."""
    Q, _ = np.linalg.qr(np.random.default_rng(seed).standard_normal((n, p)))
    return np.sqrt(n) * Q


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
