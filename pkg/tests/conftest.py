import numpy as np
import pytest

from skewdpm.linalg import SpdMatrix


def random_spd(rng, d, scale=1.0):
    a = rng.standard_normal((d, d))
    return SpdMatrix(scale * (a @ a.T / d + 0.5 * np.eye(d)))


def assert_within_se(samples, expected, n_se=3.0, axis=0):
    """Sample mean within ``n_se`` Monte Carlo standard errors of ``expected``."""
    samples = np.asarray(samples, dtype=float)
    mean = samples.mean(axis=axis)
    se = samples.std(axis=axis, ddof=1) / np.sqrt(samples.shape[axis])
    err = np.abs(mean - expected)
    assert np.all(err <= n_se * se + 1e-12), (mean, expected, se)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def report(criterion, passed, detail):
    """Record one acceptance line; printed in the terminal summary."""
    line = f"{criterion} {'PASS' if passed else 'FAIL'}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
