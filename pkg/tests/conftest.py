import numpy as np
import pytest


def planted_block(n: int, members, value: float = 1.0, noise: float = 0.0, seed: int = 0) -> np.ndarray:
    """Symmetric zero-diagonal matrix with ``value`` on the off-diagonal of ``members``."""
    rng = np.random.default_rng(seed)
    m = np.zeros((n, n))
    idx = np.asarray(list(members))
    m[np.ix_(idx, idx)] = value
    if noise:
        e = rng.normal(0.0, noise, (n, n))
        m += (e + e.T) / 2
    np.fill_diagonal(m, 0.0)
    return m


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[key])
