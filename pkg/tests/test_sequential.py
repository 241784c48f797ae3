import numpy as np
import pytest
from scipy import stats

from skewdpm.distributions import rsniw
from skewdpm.exceptions import (ComponentCollapseError, ConfigError, ConstraintError,
                                DegenerateSampleError)
from skewdpm.linalg import SpdMatrix
from skewdpm.model import DataMatrix, NuPrior, SNiWParams, default_hyperparams
from skewdpm.sampler import ChainConfig, PosteriorDraws, run_chain
from skewdpm.sequential import (MapPriorConfig, build_informative_prior, em_sniw, fit_gamma_mle,
                                mle_niw, mle_sniw, niw_lambda_residual, pooled_cluster_draws)

TRUE = SNiWParams([1.0, -1.0], [2.0, 0.0], SpdMatrix([[0.5, 0.1], [0.1, 0.3]]),
                  SpdMatrix([[1.0, 0.3], [0.3, 2.0]]), 8.0)


def rel_err(est, true):
    est, true = np.asarray(est, float), np.asarray(true, float)
    return np.linalg.norm(est - true) / max(np.linalg.norm(true), 1.0)


def sniw_draws(h, n, rng):
    out = [rsniw(h, rng) for _ in range(n)]
    return (np.array([o[0] for o in out]), np.array([o[1] for o in out]),
            np.array([o[2].values for o in out]))


def shifted(h, shift):
    return SNiWParams(h.b_xi + shift, h.b_psi, h.b_cov, h.lambda_scale, h.lambda_dof)


def assert_recovers(est, true, tol=0.1):
    assert rel_err(est.b_xi, true.b_xi) < tol
    assert rel_err(est.b_psi, true.b_psi) < tol
    assert rel_err(est.b_cov.values, true.b_cov.values) < tol
    assert rel_err(est.lambda_scale.values, true.lambda_scale.values) < tol
    assert abs(est.lambda_dof / true.lambda_dof - 1) < tol


# --- Gamma -------------------------------------------------------------------------

def test_gamma_mle_recovery():
    x = np.random.default_rng(0).gamma(2.0, 1 / 3.0, 100_000)
    a, b = fit_gamma_mle(x)
    assert a == pytest.approx(2.0, rel=0.05) and b == pytest.approx(3.0, rel=0.05)
    # the likelihood equation holds at the answer
    assert np.log(a) - stats.gamma.fit(x, floc=0)[0] == pytest.approx(np.log(a) - a, abs=1e-4)


def test_gamma_mle_degenerate_inputs():
    with pytest.raises(DegenerateSampleError):
        fit_gamma_mle(np.full(50, 1.3))
    with pytest.raises(ConfigError):
        fit_gamma_mle([1.0, 2.0])
    with pytest.raises(ConfigError):
        fit_gamma_mle(np.r_[np.ones(20), -1.0])


# --- NiW -------------------------------------------------------------------------------

def test_niw_symmetric_inputs():
    # identity-proportional Sigma_i and symmetric locations give mu0 = 0 and an isotropic scale;
    # all-identical Sigma_i make the dof equation rootless, all-equal locations make kappa0 infinite
    c = np.repeat([0.5, 1.0, 2.0, 4.0], 4)
    signs = np.tile([[1, 0], [-1, 0], [0, 1], [0, -1]], (4, 1)).astype(float)
    sig = np.array([ci * np.eye(2) for ci in c])
    fit = mle_niw(signs, sig)
    np.testing.assert_allclose(fit.mu0, 0.0, atol=1e-14)
    expected_scale = fit.dof * len(c) / np.sum(1 / c) * np.eye(2)
    np.testing.assert_allclose(fit.scale.values, expected_scale, rtol=1e-12)
    with pytest.raises(ConstraintError):
        mle_niw(signs, [np.eye(2)] * len(c))
    with pytest.raises(DegenerateSampleError):
        mle_niw(np.zeros((len(c), 2)), sig)


def test_niw_recovery():
    rng = np.random.default_rng(1)
    n, kappa0, dof = 10_000, 2.0, 8.0
    sig = stats.invwishart(df=dof, scale=np.eye(2)).rvs(n, random_state=rng)
    mu = np.array([rng.multivariate_normal(np.zeros(2), s / kappa0) for s in sig])
    fit = mle_niw(mu, sig)
    assert np.linalg.norm(fit.mu0) < 0.1
    assert fit.kappa0 == pytest.approx(kappa0, rel=0.1)
    assert rel_err(fit.scale.values, np.eye(2)) < 0.1
    assert fit.dof == pytest.approx(dof, rel=0.1)
    assert fit.dof > 3 and abs(niw_lambda_residual(fit.dof, sig)) < 1e-8


# --- sNiW ----------------------------------------------------------------------------------

def test_sniw_recovery():
    draws = sniw_draws(TRUE, 10_000, np.random.default_rng(2))
    fit = mle_sniw(*draws)
    assert_recovers(fit, TRUE)
    assert fit.b_cov.dim == 2 and np.all(np.linalg.eigvalsh(fit.b_cov.values) > 0)


def test_sniw_identical_draws():
    with pytest.raises(DegenerateSampleError):
        mle_sniw(np.ones((20, 2)), np.zeros((20, 2)), np.array([np.eye(2)] * 20))


# --- EM ------------------------------------------------------------------------------------

@pytest.fixture(scope="module")
def two_populations():
    rng = np.random.default_rng(3)
    a = sniw_draws(shifted(TRUE, 50.0), 1000, rng)
    b = sniw_draws(shifted(TRUE, -50.0), 1000, rng)
    return tuple(np.concatenate(p) for p in zip(a, b))


def test_em_single_component_equals_mle():
    draws = sniw_draws(TRUE, 500, np.random.default_rng(4))
    fit = em_sniw(draws, 1, mode="mle")
    ref = mle_sniw(*draws)
    np.testing.assert_array_equal(fit.responsibilities, 1.0)
    comp = fit.components[0]
    np.testing.assert_allclose(comp.b_xi, ref.b_xi, rtol=1e-12)
    np.testing.assert_allclose(comp.b_psi, ref.b_psi, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(comp.b_cov.values, ref.b_cov.values, rtol=1e-12)
    np.testing.assert_allclose(comp.lambda_scale.values, ref.lambda_scale.values, rtol=1e-12)
    assert comp.lambda_dof == pytest.approx(ref.lambda_dof, rel=1e-12)


def test_em_separates_two_populations(two_populations):
    fit = em_sniw(two_populations, 2, mode="mle", rng=np.random.default_rng(5))
    r = fit.responsibilities
    assert np.all((r < 1e-6) | (r > 1 - 1e-6))
    assert fit.is_monotone()
    order = np.argsort([c.b_xi[0] for c in fit.components])
    assert_recovers(fit.components[order[0]], shifted(TRUE, -50.0))
    assert_recovers(fit.components[order[1]], shifted(TRUE, 50.0))
    np.testing.assert_allclose(fit.weights, 0.5, atol=1e-6)


def test_em_map_surplus_components(two_populations):
    fit = em_sniw(two_populations, 5, mode="map", rng=np.random.default_rng(5))
    assert fit.is_monotone() and len(fit.components) == 5
    assert abs(fit.weights.sum() - 1) < 1e-12
    top = np.sort(fit.weights)[::-1]
    assert top[:2].sum() > 0.95


def test_em_mle_collapse_is_typed():
    # three distinct draws cannot support two full-rank components
    draws = sniw_draws(TRUE, 3, np.random.default_rng(6))
    with pytest.raises(ComponentCollapseError):
        em_sniw(draws, 3, mode="mle", n_restarts=2)


def test_em_argument_checks(two_populations):
    with pytest.raises(ConfigError):
        em_sniw(two_populations, 0)
    with pytest.raises(ConfigError):
        em_sniw(two_populations, 2, mode="bayes")
    with pytest.raises(ConfigError):
        MapPriorConfig(dirichlet_alpha=0.5)


@pytest.mark.parametrize("seed", range(4))
def test_em_objective_monotone(seed):
    rng = np.random.default_rng(seed)
    a = sniw_draws(TRUE, 150, rng)
    b = sniw_draws(shifted(TRUE, 3.0), 150, rng)
    draws = tuple(np.concatenate(p) for p in zip(a, b))
    for mode in ("mle", "map"):
        try:
            fit = em_sniw(draws, 3, mode=mode, rng=np.random.default_rng(seed))
        except ComponentCollapseError:
            continue
        assert fit.is_monotone()
        assert np.all(np.diff(fit.objective_trace) >= -1e-9 * np.abs(fit.objective_trace[1:]))


# --- informative prior ----------------------------------------------------------------------

@pytest.fixture(scope="module")
def single_cluster_draws():
    rng = np.random.default_rng(7)
    y = rng.multivariate_normal([3.0, -2.0], [[1.0, 0.2], [0.2, 0.5]], 300)
    data = DataMatrix(y)
    base, prior = default_hyperparams(data, scale_divisor=1.0, concentration=(1.0, 1.0))
    return run_chain(data, base, prior,
                     ChainConfig(n_iter=300, burn_in=100, mode="sn", seed=3,
                                 n_init_clusters=1))


def test_informative_prior_single_cluster(single_cluster_draws):
    base, conc = build_informative_prior(single_cluster_draws, k=1)
    assert len(base.components) == 1 and base.weights[0] == 1.0
    comp = base.components[0]
    # E[xi + psi E s] is the data mean for a skew-normal cluster
    centre = comp.b_xi + comp.b_psi * np.sqrt(2 / np.pi)
    np.testing.assert_allclose(centre, [3.0, -2.0], atol=0.3)
    assert comp.lambda_dof > 3 and conc.a > 0 and conc.b > 0
    again = build_informative_prior(single_cluster_draws, k=1)
    np.testing.assert_array_equal(again[0].components[0].b_xi, comp.b_xi)
    assert again[1] == conc


def test_informative_prior_alpha_fit(single_cluster_draws):
    d = single_cluster_draws
    alpha = np.random.default_rng(8).gamma(2.0, 1 / 3.0, 100_000)
    fake = PosteriorDraws([d.partitions[0]] * len(alpha), [d.cluster_params[0]] * len(alpha),
                          alpha, np.ones(len(alpha), int), np.zeros(len(alpha)), np.nan,
                          d.full_logdensity, d.full_k, d.full_alpha, mode="sn")
    pooled = pooled_cluster_draws(d)
    assert pooled[0].shape[0] == sum(len(c) for c in d.cluster_params)
    base, conc = build_informative_prior(fake, k=1, nu_prior=NuPrior("exponential", 0.5))
    assert conc.a == pytest.approx(2.0, rel=0.05) and conc.b == pytest.approx(3.0, rel=0.05)
    assert base.nu_prior == NuPrior("exponential", 0.5)
