import numpy as np
import pytest

from clipped_sqn import objectives
from clipped_sqn.objectives import ObjectiveKind

ROBUST = ObjectiveKind.ROBUST_LINEAR_REGRESSION
LOGISTIC = ObjectiveKind.NONCONVEX_LOGISTIC
SCE = ObjectiveKind.SIGMOID_CROSS_ENTROPY


def fd_gradient(f, x, h=1e-5):
    """Central finite differences, one coordinate at a time."""
    x = np.asarray(x, dtype=np.float64)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_robust():
    return objectives.generate_synthetic(5, 40, 0.4, "pm1", seed=3)


@pytest.fixture(scope="session")
def small_logistic():
    return objectives.generate_synthetic(5, 40, 0.4, "zero_one", seed=4)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        terminalreporter.write_line(RESULTS[key])
