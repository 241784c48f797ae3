"""Parametric compression of posterior draws into an informative prior.

Posterior draws of ``(xi_k, psi_k, Sigma_k)`` are summarized by a finite
mixture of structured Normal inverse-Wishart (sNiW) distributions fitted by
EM, and draws of ``alpha`` by a Gamma distribution. The result can be used
as the base measure and concentration prior of a chain on the next sample.

Internally the location block uses the precision convention
``vec(M_i) ~ N(vec(M), (B kron Sigma_i^{-1})^{-1})`` with ``M`` the d x 2
matrix ``[xi, psi]``; fitted parameters are converted to the covariance
convention of :class:`~skewdpm.model.SNiWParams` (``b_cov = B^{-1}``) on
output.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import digamma, gammaln, logsumexp, multigammaln, polygamma

from .exceptions import (ComponentCollapseError, ConfigError, ConstraintError,
                         DegenerateSampleError)
from .linalg import SpdMatrix
from .model import BaseMeasure, ConcentrationPrior, NuPrior, SNiWParams

_LOG_2 = np.log(2.0)
_LOG_2PI = np.log(2.0 * np.pi)
_LAMBDA_MAX = 1e6
_NEWTON_TOL = 1e-10
_COLLAPSE_TOL = 1e-8
_MONOTONE_SLACK = 1e-9

NiWParams = namedtuple("NiWParams", ["mu0", "kappa0", "scale", "dof"])


@dataclass(frozen=True)
class MapPriorConfig:
    """Priors used by the MAP variant of the sNiW-mixture EM.

    Parameters
    ----------
    dirichlet_alpha : float
        Symmetric Dirichlet parameter on the mixture weights (>= 1).
    kappa0 : float
        Strength of the Normal part of the Normal-Wishart prior on
        ``(mu_k, B_k)``.
    c_scale : float
        ``B_k ~ Wishart(c_scale * I_2, 4)``.
    lambda_rate : float
        ``lambda_k - (d + 1) ~ Exp(lambda_rate)``.
    """

    dirichlet_alpha: float = 1.0
    kappa0: float = 0.01
    c_scale: float = 100.0
    lambda_rate: float = 1.0

    def __post_init__(self):
        if not (self.kappa0 > 0 and self.c_scale > 0 and self.lambda_rate > 0):
            raise ConfigError("MAP prior parameters must be positive")
        if not self.dirichlet_alpha >= 1:
            raise ConfigError("dirichlet_alpha must be at least 1")


@dataclass
class SNiWMixtureFit:
    """Result of :func:`em_sniw`."""

    weights: np.ndarray
    components: list
    objective_trace: list = field(default_factory=list)
    converged: bool = False
    responsibilities: np.ndarray = None

    @property
    def objective(self):
        return self.objective_trace[-1]

    def is_monotone(self, slack=_MONOTONE_SLACK):
        tr = np.asarray(self.objective_trace)
        tol = slack * np.maximum(1.0, np.abs(tr[1:]))
        return bool(np.all(np.diff(tr) >= -tol))


# --- Gamma ------------------------------------------------------------------

def fit_gamma_mle(draws):
    """Gamma(shape, rate) maximum likelihood fit.

    Newton iteration on ``log a - digamma(a) = log(mean) - mean(log)``
    started at the moment estimator ``(m^2 / v, m / v)``.

    Returns
    -------
    shape, rate : float
    """
    x = np.asarray(draws, dtype=float).ravel()
    if x.size < 10:
        raise ConfigError("at least 10 draws are required")
    if np.any(~(x > 0)) or not np.all(np.isfinite(x)):
        raise ConfigError("draws must be finite and positive")
    mean = x.mean()
    var = x.var()
    if not var > 0:
        raise DegenerateSampleError("draws have zero variance")
    target = np.log(mean) - np.mean(np.log(x))
    if not target > 0:
        raise DegenerateSampleError("draws are numerically constant")
    a = mean * mean / var
    for _ in range(200):
        score = np.log(a) - digamma(a) - target
        if abs(score) < _NEWTON_TOL:
            break
        step = score / (1.0 / a - polygamma(1, a))
        a_new = a - step
        a = a_new if a_new > 0 else 0.5 * a
    else:
        raise ConstraintError("Gamma shape iteration did not converge")
    return float(a), float(a / mean)


# --- helpers ------------------------------------------------------------------

def _multidigamma(x, d):
    return float(np.sum(digamma(x - 0.5 * np.arange(d))))


def _multitrigamma(x, d):
    return float(np.sum(polygamma(1, x - 0.5 * np.arange(d))))


def _solve_decreasing(h, dh, lo, hi):
    """Root of a decreasing function on ``(lo, hi)``; ``None`` if no sign change."""
    f_lo, f_hi = h(lo), h(hi)
    if f_lo < 0 or f_hi > 0:
        return None
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) > 0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-6 * max(1.0, lo):
            break
    x = 0.5 * (lo + hi)
    for _ in range(50):
        fx = h(x)
        if abs(fx) < 1e-12:
            break
        step = fx / dh(x)
        x_new = x - step
        if not lo <= x_new <= hi:
            break
        x = x_new
    return x


def _as_sigma_stack(sigma_draws):
    if isinstance(sigma_draws, np.ndarray) and sigma_draws.ndim == 3:
        mats = [SpdMatrix(s) for s in sigma_draws]
    else:
        mats = [s if isinstance(s, SpdMatrix) else SpdMatrix(s) for s in sigma_draws]
    return mats


class _DrawSet:
    """Pooled draws with precomputed inverses and log-determinants."""

    def __init__(self, xi, psi, sigma):
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        psi = np.atleast_2d(np.asarray(psi, dtype=float))
        mats = _as_sigma_stack(sigma)
        n, d = xi.shape
        if psi.shape != (n, d) or len(mats) != n or any(m.dim != d for m in mats):
            raise ConfigError("xi, psi and sigma draws have inconsistent shapes")
        self.n, self.d = n, d
        self.loc = np.stack((xi, psi), axis=2)  # (n, d, 2)
        self.sigma = np.array([m.values for m in mats])
        self.sigma_inv = np.array([m.inv for m in mats])
        self.logdet = np.array([m.logdet for m in mats])


def _solve_lambda(sum_logdet, weight, logdet_term, d, extra=0.0, rate=0.0):
    """Root in ``lambda`` of the profile score for the inverse-Wishart part.

    ``-sum_logdet/2 - N d log2 / 2 + N d log(N lambda + extra) / 2
    - N logdet_term / 2 - N psi_d(lambda / 2) / 2 - rate``.
    """
    n_k = weight

    def h(lam):
        return (-0.5 * sum_logdet - 0.5 * n_k * d * _LOG_2
                + 0.5 * n_k * d * np.log(n_k * lam + extra)
                - 0.5 * n_k * logdet_term - 0.5 * n_k * _multidigamma(0.5 * lam, d) - rate)

    def dh(lam):
        return (0.5 * n_k * d * n_k / (n_k * lam + extra)
                - 0.25 * n_k * _multitrigamma(0.5 * lam, d))

    lo, hi = d + 1.0 + 1e-6, _LAMBDA_MAX
    root = _solve_decreasing(h, dh, lo, hi)
    return root, h, lo, hi


# --- single-population MLE ------------------------------------------------------

def mle_niw(mu_draws, sigma_draws):
    """Maximum likelihood fit of a Normal inverse-Wishart to ``(mu_i, Sigma_i)``.

    Returns
    -------
    NiWParams
        ``(mu0, kappa0, scale, dof)`` with ``mu_i | Sigma_i ~ N(mu0, Sigma_i / kappa0)``
        and ``Sigma_i ~ IW(dof, scale)``.
    """
    mu = np.atleast_2d(np.asarray(mu_draws, dtype=float))
    mats = _as_sigma_stack(sigma_draws)
    n, d = mu.shape
    if n < 2 or len(mats) != n:
        raise ConfigError("at least two matching (mu, Sigma) draws are required")
    s_inv = np.array([m.inv for m in mats])
    logdet = np.array([m.logdet for m in mats])
    prec_sum = s_inv.sum(axis=0)
    mu0 = np.linalg.solve(prec_sum, np.einsum("nab,nb->a", s_inv, mu))
    dev = mu - mu0
    quad = float(np.einsum("na,nab,nb->", dev, s_inv, dev))
    if not quad > 0:
        raise DegenerateSampleError("all location draws coincide")
    kappa0 = n * d / quad
    logdet_sum_prec = np.linalg.slogdet(prec_sum)[1]
    lam, h, lo, _ = _solve_lambda(logdet.sum(), n, logdet_sum_prec, d)
    if lam is None:
        raise ConstraintError(f"no inverse-Wishart dof solution above d + 1 = {d + 1}")
    scale = n * lam * np.linalg.inv(prec_sum)
    return NiWParams(mu0, kappa0, SpdMatrix(0.5 * (scale + scale.T)), lam)


def niw_lambda_residual(lam, sigma_draws):
    """Residual of the dof estimating equation at ``lam`` (for checks)."""
    mats = _as_sigma_stack(sigma_draws)
    n, d = len(mats), mats[0].dim
    prec_sum = np.sum([m.inv for m in mats], axis=0)
    rhs = (-np.mean([m.logdet for m in mats]) + d * np.log(0.5 * n * lam)
           - np.linalg.slogdet(prec_sum)[1])
    return _multidigamma(0.5 * lam, d) - rhs


def _weighted_mstep(ds, r, mode, prior=None, lam_clamp=True):
    """Maximize the expected complete-data objective for one component."""
    d = ds.d
    n_k = float(r.sum())
    s_k = np.einsum("n,nab->ab", r, ds.sigma_inv)
    rhs = np.einsum("n,nab,nbc->ac", r, ds.sigma_inv, ds.loc)
    if mode == "map":
        anchor = prior["kappa0"] * prior["s_bar"]
        loc = np.linalg.solve(s_k + anchor, rhs + anchor @ prior["m"])
    else:
        loc = np.linalg.solve(s_k, rhs)
    res = ds.loc - loc
    scatter = np.einsum("n,nai,nab,nbj->ij", r, res, ds.sigma_inv, res)
    if mode == "map":
        dm = loc - prior["m"]
        scatter_map = (prior["c_inv"] + scatter
                       + prior["kappa0"] * dm.T @ prior["s_bar"] @ dm)
        b_prec = (n_k * d + d + 1.0) * np.linalg.inv(scatter_map)
    else:
        eig = np.linalg.eigvalsh(scatter)
        if not eig[0] > 1e-12 * max(1.0, eig[-1]):
            raise ComponentCollapseError(
                f"component with responsibility mass {n_k:.3g} has a singular location scatter")
        b_prec = n_k * d * np.linalg.inv(scatter)
    b_prec = 0.5 * (b_prec + b_prec.T)
    sum_logdet = float(r @ ds.logdet)

    if mode == "map":
        total = prior["l_inv"] + s_k
        logdet_term = np.linalg.slogdet(total)[1]
        lam, h, lo, hi = _solve_lambda(sum_logdet, n_k, logdet_term, d, extra=1.0,
                                       rate=prior["lambda_rate"])
        if lam is None:
            lam = lo if h(lo) < 0 else hi
        scale = (n_k * lam + 1.0) * np.linalg.inv(total)
    else:
        logdet_term = np.linalg.slogdet(s_k)[1]
        lam, h, lo, hi = _solve_lambda(sum_logdet, n_k, logdet_term, d)
        if lam is None:
            if not lam_clamp:
                raise ConstraintError(
                    f"no inverse-Wishart dof solution above d + 1 = {d + 1}")
            lam = lo if h(lo) < 0 else hi
        scale = n_k * lam * np.linalg.inv(s_k)
    return loc, b_prec, 0.5 * (scale + scale.T), lam


def _sniw_from_parts(loc, b_prec, scale, lam):
    b_cov = np.linalg.inv(b_prec)
    return SNiWParams(loc[:, 0], loc[:, 1], SpdMatrix(0.5 * (b_cov + b_cov.T)),
                      SpdMatrix(scale), lam)


def mle_sniw(xi_draws, psi_draws, sigma_draws):
    """Maximum likelihood fit of a structured Normal inverse-Wishart.

    The location estimate ``M0 = (sum Sigma_i^-1)^-1 sum Sigma_i^-1 M_i``
    does not involve ``B0``, so the alternation between ``M0`` and
    ``B0 = n d (sum R_i' Sigma_i^-1 R_i)^-1`` settles after one pass.

    Returns
    -------
    SNiWParams
        With ``b_cov = B0^{-1}``.
    """
    ds = _DrawSet(xi_draws, psi_draws, sigma_draws)
    if ds.n < 2:
        raise ConfigError("at least two draws are required")
    r = np.ones(ds.n)
    loc = np.linalg.solve(ds.sigma_inv.sum(axis=0), np.einsum("nab,nbc->ac", ds.sigma_inv, ds.loc))
    res = ds.loc - loc
    scatter = np.einsum("nai,nab,nbj->ij", res, ds.sigma_inv, res)
    if np.linalg.matrix_rank(scatter, tol=1e-12 * max(1.0, np.abs(scatter).max())) < 2:
        raise DegenerateSampleError("location draws do not span both xi and psi directions")
    loc, b_prec, scale, lam = _weighted_mstep(ds, r, "mle", lam_clamp=False)
    return _sniw_from_parts(loc, b_prec, scale, lam)


# --- mixture EM -------------------------------------------------------------------

def _component_logpdf(ds, loc, b_prec, scale, lam):
    """sNiW log density of every draw under one component (precision form)."""
    d = ds.d
    res = ds.loc - loc
    quad = np.einsum("ij,nai,nab,nbj->n", b_prec, res, ds.sigma_inv, res)
    trace = np.einsum("ab,nab->n", scale, ds.sigma_inv)
    logdet_scale = np.linalg.slogdet(scale)[1]
    logdet_b = np.linalg.slogdet(b_prec)[1]
    iw = (0.5 * lam * logdet_scale - 0.5 * lam * d * _LOG_2 - multigammaln(0.5 * lam, d)
          - 0.5 * (lam + d + 1) * ds.logdet - 0.5 * trace)
    normal = -d * _LOG_2PI + 0.5 * d * logdet_b - ds.logdet - 0.5 * quad
    return iw + normal


def _wishart_logpdf(x, scale, dof):
    p = x.shape[0]
    return (0.5 * (dof - p - 1) * np.linalg.slogdet(x)[1]
            - 0.5 * np.trace(np.linalg.solve(scale, x))
            - 0.5 * dof * p * _LOG_2 - 0.5 * dof * np.linalg.slogdet(scale)[1]
            - multigammaln(0.5 * dof, p))


def _log_prior(params, weights, prior, d):
    total = (prior["alpha"] - 1.0) * float(np.sum(np.log(weights)))
    for loc, b_prec, scale, lam in params:
        dm = loc - prior["m"]
        kappa = prior["kappa0"]
        quad = kappa * float(np.sum(b_prec * (dm.T @ prior["s_bar"] @ dm)))
        logdet = (2 * d * np.log(kappa) + d * np.linalg.slogdet(b_prec)[1]
                  + 2 * prior["logdet_s_bar"])
        total += -d * _LOG_2PI + 0.5 * logdet - 0.5 * quad
        total += _wishart_logpdf(b_prec, prior["c"], 4.0)
        total += _wishart_logpdf(scale, prior["l"], d + 2.0)
        rate = prior["lambda_rate"]
        total += np.log(rate) - rate * (lam - d - 1.0)
    return total


def _empirical_prior(ds, cfg):
    d = ds.d
    m = ds.loc.mean(axis=0)
    var_xi = ds.loc[:, :, 0].var(axis=0, ddof=1) if ds.n > 1 else np.zeros(d)
    var_psi = ds.loc[:, :, 1].var(axis=0, ddof=1) if ds.n > 1 else np.zeros(d)
    l_diag = 0.5 * (var_xi + var_psi)
    if not np.all(l_diag > 0):
        raise DegenerateSampleError("location draws have zero variance in some dimension")
    s_bar = ds.sigma_inv.mean(axis=0)
    c = cfg.c_scale * np.eye(2)
    return {
        "alpha": cfg.dirichlet_alpha, "kappa0": cfg.kappa0, "m": m, "s_bar": s_bar,
        "logdet_s_bar": np.linalg.slogdet(s_bar)[1], "c": c, "c_inv": np.linalg.inv(c),
        "l": np.diag(l_diag), "l_inv": np.diag(1.0 / l_diag), "lambda_rate": cfg.lambda_rate,
    }


def _run_em(ds, resp, mode, prior, max_iter, tol):
    n, k_all = resp.shape
    trace = []
    converged = False
    params = weights = None
    for _ in range(max_iter):
        n_k = resp.sum(axis=0)
        if mode == "mle":
            if np.any(n_k < _COLLAPSE_TOL):
                raise ComponentCollapseError(
                    f"component {int(np.argmin(n_k))} has responsibility mass {n_k.min():.3g}")
            weights = n_k / n
        else:
            a = prior["alpha"]
            weights = (n_k + a - 1.0) / (n + k_all * (a - 1.0))
        params = [_weighted_mstep(ds, resp[:, k], mode, prior) for k in range(k_all)]
        with np.errstate(divide="ignore"):
            logw = np.log(weights)
        logp = np.column_stack([_component_logpdf(ds, *p) for p in params]) + logw
        norm = logsumexp(logp, axis=1)
        obj = float(norm.sum())
        if mode == "map":
            obj += _log_prior(params, np.maximum(weights, np.finfo(float).tiny), prior, ds.d)
        resp = np.exp(logp - norm[:, None])
        trace.append(obj)
        if len(trace) > 1 and abs(trace[-1] - trace[-2]) < tol * max(1.0, abs(trace[-1])):
            converged = True
            break
    return params, weights, trace, converged, resp


def em_sniw(draws, k, mode="map", cfg=None, rng=None, n_restarts=5, max_iter=500, tol=1e-8):
    """Fit a K-component sNiW mixture to parameter draws by EM.

    Parameters
    ----------
    draws : tuple ``(xi, psi, sigma)``
        Arrays of shape (n, d), (n, d) and (n, d, d) (or a list of
        SpdMatrix for ``sigma``).
    k : int
        Number of components.
    mode : {"mle", "map"}
        Maximum likelihood, or maximum a posteriori under the priors in
        ``cfg`` (empirical-Bayes centring on the draws).
    cfg : MapPriorConfig, optional
    rng : numpy.random.Generator, optional
        Drives the k-means initializations.
    n_restarts : int
        Number of k-means initializations; the best final objective wins.

    Returns
    -------
    SNiWMixtureFit
        ``objective_trace`` holds the incomplete-data log-likelihood (MLE)
        or log-posterior (MAP) after every M step.

    Raises
    ------
    ComponentCollapseError
        MLE mode only, when a component loses all responsibility mass.
    """
    if mode not in ("mle", "map"):
        raise ConfigError(f"unknown EM mode {mode!r}")
    cfg = cfg or MapPriorConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    ds = _DrawSet(*draws)
    k = int(k)
    if not 1 <= k <= ds.n:
        raise ConfigError(f"need 1 <= K <= n, got K={k}, n={ds.n}")
    prior = _empirical_prior(ds, cfg) if mode == "map" else None
    features = ds.loc.reshape(ds.n, -1)
    best = None
    for restart in range(max(1, n_restarts) if k > 1 else 1):
        if k == 1:
            labels = np.zeros(ds.n, dtype=int)
        else:
            _, labels = kmeans2(features, k, minit="++", rng=rng)
        resp = np.zeros((ds.n, k))
        resp[np.arange(ds.n), labels] = 1.0
        try:
            params, weights, trace, conv, resp = _run_em(ds, resp, mode, prior, max_iter, tol)
        except ComponentCollapseError:
            if best is None and restart == max(1, n_restarts) - 1:
                raise
            continue
        if best is None or trace[-1] > best[2][-1]:
            best = (params, weights, trace, conv, resp)
    if best is None:
        raise ComponentCollapseError("every EM initialization collapsed")
    params, weights, trace, conv, resp = best
    comps = [_sniw_from_parts(*p) for p in params]
    return SNiWMixtureFit(np.asarray(weights), comps, trace, conv, resp)


# --- priors for the next chain ---------------------------------------------------

def pooled_cluster_draws(draws):
    """Stack every occupied-cluster ``(xi, psi, Sigma)`` from every stored draw."""
    xi, psi, sigma = [], [], []
    for clusters in draws.cluster_params:
        for cp in clusters:
            xi.append(cp.xi)
            psi.append(cp.psi)
            sigma.append(cp.sigma.values)
    if not xi:
        raise ConfigError("no cluster draws to pool")
    return np.array(xi), np.array(psi), np.array(sigma)


def build_informative_prior(draws, k=None, cfg=None, nu_prior=None, seed=0):
    """Informative base measure and concentration prior from a previous chain.

    Parameters
    ----------
    draws : PosteriorDraws
    k : int, optional
        Number of sNiW components; defaults to the most frequent number of
        clusters among the stored draws.
    cfg : MapPriorConfig, optional
    nu_prior : NuPrior, optional
        Passed through unchanged.
    seed : int
        Seed of the EM initializations.

    Returns
    -------
    BaseMeasure, ConcentrationPrior
    """
    if draws.n_draws == 0:
        raise ConfigError("no stored draws")
    if k is None:
        values, counts = np.unique(np.asarray(draws.k_trace), return_counts=True)
        k = int(values[np.argmax(counts)])
    pooled = pooled_cluster_draws(draws)
    fit = em_sniw(pooled, k, "map", cfg or MapPriorConfig(), np.random.default_rng(seed))
    keep = fit.weights > 1e-12
    weights = fit.weights[keep] / fit.weights[keep].sum()
    comps = [c for c, kp in zip(fit.components, keep) if kp]
    base = BaseMeasure(tuple(comps), weights, nu_prior or NuPrior())
    a, b = fit_gamma_mle(draws.alpha_trace)
    return base, ConcentrationPrior(a, b)
