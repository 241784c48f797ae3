import numpy as np
import pytest
from scipy import stats

from skewdpm.exceptions import ConfigError
from skewdpm.linalg import SpdMatrix
from skewdpm.model import ClusterParams
from skewdpm.simulate import component_counts, four_cluster_scenario, rskewt, simulate_mixture


def test_gaussian_limit_moments():
    cp = ClusterParams([1.0, -2.0], [0.0, 0.0], SpdMatrix([[2.0, 0.5], [0.5, 1.0]]), 1e6)
    y, labels = simulate_mixture([1.0], [cp], 50_000, np.random.default_rng(0))
    assert set(labels) == {1}
    n = len(y)
    se_mean = np.sqrt(np.diag(cp.sigma.values) / n)
    assert np.all(np.abs(y.mean(0) - cp.xi) < 3 * se_mean)
    cov = np.cov(y.T)
    # var of a sample covariance entry: (s_ij^2 + s_ii s_jj) / n
    s = cp.sigma.values
    se_cov = np.sqrt((s ** 2 + np.outer(np.diag(s), np.diag(s))) / n)
    assert np.all(np.abs(cov - s) < 3 * se_cov)


def test_positive_skew_sign():
    cp = ClusterParams([0.0], [10.0], SpdMatrix([[1.0]]), 1e6)
    y = rskewt(20_000, cp, np.random.default_rng(1))
    assert stats.skew(y[:, 0]) > 0
    assert np.mean(y) == pytest.approx(10 * np.sqrt(2 / np.pi), abs=0.15)


def test_skew_t_mean():
    # E[y] = xi + psi sqrt(2/pi) E[W^{-1/2}], E[W^{-1/2}] = sqrt(nu/2) G((nu-1)/2) / G(nu/2)
    from scipy.special import gammaln
    nu = 6.0
    cp = ClusterParams([0.5], [2.0], SpdMatrix([[1.0]]), nu)
    y = rskewt(200_000, cp, np.random.default_rng(2))[:, 0]
    ew = np.sqrt(nu / 2) * np.exp(gammaln((nu - 1) / 2) - gammaln(nu / 2))
    expected = 0.5 + 2.0 * np.sqrt(2 / np.pi) * ew
    assert abs(y.mean() - expected) < 3 * y.std() / np.sqrt(len(y))


def test_four_cluster_scenario_reproducible():
    w, comps = four_cluster_scenario()
    np.testing.assert_array_equal(w, [0.5, 0.3, 0.15, 0.05])
    y1, l1 = simulate_mixture(w, comps, 2000, np.random.default_rng(4))
    y2, l2 = simulate_mixture(w, comps, 2000, np.random.default_rng(4))
    np.testing.assert_array_equal(y1, y2)
    np.testing.assert_array_equal(l1, l2)
    np.testing.assert_array_equal(np.bincount(l1)[1:], [1000, 600, 300, 100])
    assert y1.shape == (2000, 2)


def test_counts_and_validation():
    np.testing.assert_array_equal(component_counts([0.5, 0.3, 0.2], 7), [4, 2, 1])
    assert component_counts([1 / 3] * 3, 10).sum() == 10
    cp = ClusterParams([0.0], [0.0], SpdMatrix([[1.0]]))
    with pytest.raises(ConfigError):
        simulate_mixture([0.5, 0.4], [cp, cp], 10, np.random.default_rng(0))
    y, lab = simulate_mixture([0.5, 0.5], [cp, cp], 101, np.random.default_rng(0), exact=False)
    assert len(y) == 101 and set(lab) <= {1, 2}
