import numpy as np
import pytest

from skewdpm.diagnostics import gelman_rubin, iterations_to_convergence
from skewdpm.exceptions import ConfigError


def classic_split_rhat(traces):
    # textbook formula written out chain by chain
    halves = []
    for t in traces:
        n = len(t) // 2
        halves += [t[:n], t[len(t) - n:]]
    m, n = len(halves), len(halves[0])
    means = [np.mean(h) for h in halves]
    grand = np.mean(means)
    b = n / (m - 1) * sum((mu - grand) ** 2 for mu in means)
    w = np.mean([np.sum((h - mu) ** 2) / (n - 1) for h, mu in zip(halves, means)])
    return np.sqrt(((n - 1) / n * w + b / n) / w)


def test_same_distribution():
    rng = np.random.default_rng(0)
    r = gelman_rubin([rng.standard_normal(10_000), rng.standard_normal(10_000)])
    assert 0.99 <= r <= 1.05


def test_disjoint_means():
    rng = np.random.default_rng(1)
    assert gelman_rubin([rng.standard_normal(1000), 100 + rng.standard_normal(1000)]) > 5


def test_matches_textbook_formula():
    rng = np.random.default_rng(2)
    traces = [rng.standard_normal(101) + k * 0.3 for k in range(3)]
    assert gelman_rubin(traces) == pytest.approx(classic_split_rhat(traces), rel=1e-12)


def test_degenerate_conventions():
    assert gelman_rubin([np.ones(20), np.ones(20)]) == 1.0
    assert gelman_rubin([np.ones(20), 2 * np.ones(20)]) == np.inf
    with pytest.raises(ConfigError):
        gelman_rubin([np.ones(20)])
    with pytest.raises(ConfigError):
        gelman_rubin([np.ones(9), np.ones(9)])
    with pytest.raises(ConfigError):
        gelman_rubin([np.ones(20), np.ones(21)])


def test_iterations_to_convergence():
    rng = np.random.default_rng(3)
    n = 2000
    # chains drift from opposite starts towards the same stationary law
    decay = np.exp(-np.arange(n) / 100.0)
    a = 20 * decay + rng.standard_normal(n)
    b = -20 * decay + rng.standard_normal(n)
    it = iterations_to_convergence([a, b])
    assert it is not None and 100 <= it <= n
    assert gelman_rubin([a[it // 2:it], b[it // 2:it]]) < 1.1
    if it > 100:
        prev = it - 50
        assert gelman_rubin([a[prev // 2:prev], b[prev // 2:prev]]) >= 1.1
    assert iterations_to_convergence([np.zeros(500), np.ones(500) + rng.random(500)]) is None


def test_identical_traces_give_one():
    x = np.random.default_rng(11).standard_normal(500).cumsum()
    assert gelman_rubin([x, x.copy(), x.copy()]) == 1.0
