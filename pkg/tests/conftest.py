import numpy as np
import pytest

from nbmmse.divergence import QuadratureSpec
from nbmmse.errors import SpectrumAllocation


@pytest.fixture(scope="session")
def spec():
    return QuadratureSpec()


@pytest.fixture
def equal():
    return SpectrumAllocation.equal


def mc_divergence(q, draws=10_000_000, seed=20240607, chunk=1_000_000):
    """Monte Carlo estimate of E_f[ln f - ln g] with r drawn as |sqrt(q) + complex noise|.

    Uses scipy's Bessel function so it shares nothing with the quadrature path.
    """
    from scipy.special import i0e

    rng = np.random.default_rng(seed)
    s = s2 = 0.0
    sq = np.sqrt(q)
    for _ in range(draws // chunk):
        z = rng.normal(size=(2, chunk))
        r = np.hypot(sq + z[0], z[1])
        llr = -0.5 * (r - sq) ** 2 + np.log(i0e(r * sq)) + np.log1p(q / 2) + r * r / (2 + q)
        s += llr.sum()
        s2 += (llr**2).sum()
    m = s / draws
    return m, np.sqrt((s2 / draws - m * m) / draws)


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
