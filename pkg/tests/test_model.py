import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from skewdpm.exceptions import ConfigError
from skewdpm.linalg import SpdMatrix
from skewdpm.model import (BaseMeasure, ClusterParams, ConcentrationPrior, DataMatrix,
                           NuPrior, SNiWParams, default_hyperparams, expected_num_clusters)


def test_expected_num_clusters_values():
    assert expected_num_clusters(1.0, 1) == 1.0
    assert expected_num_clusters(1.0, 3) == pytest.approx(11 / 6, abs=1e-15)
    assert expected_num_clusters(2.0, 2) == pytest.approx(5 / 3, abs=1e-15)
    with pytest.raises(ConfigError):
        expected_num_clusters(0.0, 3)


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.01, 50), n=st.integers(1, 500))
def test_expected_num_clusters_monotone(alpha, n):
    base = expected_num_clusters(alpha, n)
    # a single observation always forms one cluster, whatever alpha
    if n == 1:
        assert expected_num_clusters(alpha * 1.1, n) == base == 1.0
    else:
        assert expected_num_clusters(alpha * 1.1, n) > base
    assert expected_num_clusters(alpha, n + 1) > base


def test_data_matrix_validation():
    dm = DataMatrix(np.arange(6.0).reshape(3, 2))
    assert dm.columns == ("V1", "V2") and dm.n_obs == 3 and dm.dim == 2
    assert not dm.values.flags.writeable
    with pytest.raises(ConfigError):
        DataMatrix([[1.0, np.nan]])
    with pytest.raises(ConfigError):
        DataMatrix(np.zeros((0, 2)))
    with pytest.raises(ConfigError):
        DataMatrix(np.zeros((2, 2)), ["a"])


def test_default_hyperparams_rules():
    rng = np.random.default_rng(0)
    y = rng.standard_normal((500, 2))
    y = (y - y.mean(0)) / y.std(0, ddof=1) + np.array([1.0, -1.0])
    base, prior = default_hyperparams(DataMatrix(y))
    h = base.components[0]
    np.testing.assert_allclose(h.lambda_scale.values, np.eye(2) / 3, atol=1e-12)
    np.testing.assert_allclose(h.b_xi, [1.0, -1.0], atol=1e-12)
    np.testing.assert_array_equal(h.b_psi, 0.0)
    np.testing.assert_allclose(h.b_cov.values, 100 * np.eye(2))
    assert h.lambda_dof == 5.0
    assert (prior.a, prior.b) == (0.5, 0.125)
    assert base.nu_prior == NuPrior("exponential", 0.1)
    with pytest.raises(ConfigError):
        default_hyperparams(DataMatrix([[1.0, 2.0]]))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 10**6), n=st.integers(2, 40), d=st.integers(1, 4))
def test_default_hyperparams_always_valid(seed, n, d):
    y = np.random.default_rng(seed).standard_normal((n, d)) * 10 ** np.random.default_rng(seed).uniform(-3, 3)
    base, prior = default_hyperparams(DataMatrix(y))
    h = base.components[0]
    assert h.lambda_dof > d + 1 and prior.a > 0 and prior.b > 0


def test_sniw_and_base_measure_invariants():
    h = SNiWParams([0.0], [0.0], SpdMatrix(np.eye(2)), SpdMatrix([[1.0]]), 4.0)
    with pytest.raises(ConfigError):
        SNiWParams([0.0], [0.0], SpdMatrix(np.eye(2)), SpdMatrix([[1.0]]), 2.0)
    with pytest.raises(ConfigError):
        BaseMeasure((h, h), np.array([0.5, 0.6]), NuPrior())
    with pytest.raises(ConfigError):
        BaseMeasure((h,), np.array([0.0]), NuPrior())
    b = BaseMeasure((h, h), np.array([0.25, 0.75]), NuPrior())
    assert b.dim == 1


def test_nu_prior_support_and_density():
    p = NuPrior("exponential", 0.5)
    assert p.logpdf(1.0) == -np.inf
    assert p.logpdf(3.0) == pytest.approx(np.log(0.5) - 1.0)
    u = NuPrior("uniform", lo=1.0, hi=5.0)
    assert u.logpdf(1.5) == -np.inf and u.logpdf(7.0) == -np.inf
    assert u.logpdf(3.0) == pytest.approx(-np.log(4.0))
    draws = np.array([u.sample(np.random.default_rng(i)) for i in range(200)])
    assert np.all((draws > 2.0) & (draws < 6.0))
    with pytest.raises(ConfigError):
        NuPrior("jeffreys")


def test_concentration_and_cluster_params():
    with pytest.raises(ConfigError):
        ConcentrationPrior(0.0, 1.0)
    with pytest.raises(ConfigError):
        ClusterParams([0.0], [0.0], SpdMatrix([[1.0]]), 1.0)
    with pytest.raises(ConfigError):
        ClusterParams([0.0, 1.0], [0.0], SpdMatrix([[1.0]]), 3.0)
    cp = ClusterParams([0.0], [0.0], SpdMatrix([[1.0]]))
    assert np.isinf(cp.nu) and cp.with_nu(4.0).nu == 4.0
