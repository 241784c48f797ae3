"""Partially collapsed Gibbs sampler for skew-normal and skew-t DP mixtures.

One sweep runs five steps in a fixed order:

1. concentration ``alpha`` by Gamma-mixture data augmentation;
2. stick weights, slice variables and allocations (slice sampler);
3. latent skew ``s_c`` (and, for skew-t atoms, latent scale ``gamma_c``);
4. base-component indicators and cluster parameters (conjugate sNiW);
5. skew-t only: Metropolis-Hastings on each ``nu_k`` followed by a fresh
   draw of every ``gamma_c``.

Labels are relabelled by order of first appearance after every sweep, so
stored partitions use contiguous labels ``1..K``.

Randomness for step ``j`` of iteration ``t`` comes from its own substream
``(seed, 1, t, j)``. Every draw inside a step is taken from that stream in a
fixed order, so results do not depend on whether the deterministic parts of
a step run on a thread pool.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import time
import warnings

import numpy as np
from scipy.cluster.vq import kmeans2
from scipy.special import gammaln, log_ndtr, logsumexp

from .distributions import (make_rng, rsniw, rtrunct_pos, rtruncnorm_pos, sniw_logpdf,
                            student_logcdf)
from .exceptions import (ChainFailureError, ConfigError, DegenerateSliceError,
                         NotPositiveDefiniteError)
from .linalg import SpdMatrix
from .model import ClusterParams, DataMatrix, SNiWParams

_LOG_2 = np.log(2.0)
_LOG_PI = np.log(np.pi)
_LOG_2PI = np.log(2.0 * np.pi)
MAX_ATOMS = 1_000_000
_MODES = {"sn": "sn", "skew-normal": "sn", "st": "st", "skew-t": "st"}
_INIT_NU = 10.0


def _normalize_mode(mode):
    try:
        return _MODES[mode]
    except KeyError:
        raise ConfigError(f"unknown mode {mode!r}; expected 'sn' or 'st'") from None


@dataclass(frozen=True)
class ChainConfig:
    """Run-length, mode and tuning settings for one chain.

    Parameters
    ----------
    n_iter, burn_in, thin : int
        Total sweeps, discarded sweeps and thinning interval. Stored draws
        are the sweeps ``t >= burn_in`` with ``(t - burn_in) % thin == 0``.
    mode : {"sn", "st"}
        Skew-normal or skew-t mixture.
    c_nu : float
        Half-width of the uniform random walk on ``log(nu - 1)``.
    seed : int
    parallel : bool
        Evaluate atom densities and cluster posteriors on a thread pool.
        Draws are identical either way.
    n_threads : int or None
        Pool size; ``None`` lets the executor choose.
    jitter : float
        Added to the diagonal of every posterior scale matrix.
    n_init_clusters : int
        Number of k-means clusters used to seed the chain.
    """

    n_iter: int = 1000
    burn_in: int = 500
    thin: int = 1
    mode: str = "st"
    c_nu: float = 1.0
    seed: int = 0
    parallel: bool = False
    n_threads: int = None
    jitter: float = 0.0
    n_init_clusters: int = 30

    def __post_init__(self):
        object.__setattr__(self, "mode", _normalize_mode(self.mode))
        if int(self.n_iter) < 1:
            raise ConfigError("n_iter must be positive")
        if not 0 <= int(self.burn_in) < int(self.n_iter):
            raise ConfigError("burn_in must satisfy 0 <= burn_in < n_iter")
        if int(self.thin) < 1:
            raise ConfigError("thin must be at least 1")
        if not self.c_nu > 0:
            raise ConfigError("c_nu must be positive")
        if self.jitter < 0:
            raise ConfigError("jitter must be non-negative")
        if int(self.n_init_clusters) < 1:
            raise ConfigError("n_init_clusters must be positive")
        if self.n_threads is not None and int(self.n_threads) < 1:
            raise ConfigError("n_threads must be positive")

    @property
    def n_stored(self):
        return len(range(self.burn_in, self.n_iter, self.thin))


@dataclass
class ChainState:
    """Complete state of the sampler between sweeps.

    ``alloc`` holds 0-based cluster indices into ``clusters``; the public
    1-based labels are :attr:`labels`.
    """

    alloc: np.ndarray
    skew_latent: np.ndarray
    scale_latent: np.ndarray
    weights: np.ndarray
    rest_weight: float
    alpha: float
    clusters: list
    base_component_of: np.ndarray
    mode: str = "st"

    def __post_init__(self):
        self.mode = _normalize_mode(self.mode)

    @property
    def n_clusters(self):
        return len(self.clusters)

    @property
    def labels(self):
        return self.alloc + 1

    def counts(self):
        return np.bincount(self.alloc, minlength=self.n_clusters)

    def copy(self):
        return ChainState(self.alloc.copy(), self.skew_latent.copy(),
                          self.scale_latent.copy(), self.weights.copy(),
                          float(self.rest_weight), float(self.alpha), list(self.clusters),
                          self.base_component_of.copy(), self.mode)

    def check(self):
        """Raise ``AssertionError`` if a structural invariant is violated."""
        k = self.n_clusters
        assert self.alloc.min() == 0 and self.alloc.max() == k - 1
        assert np.all(self.counts() > 0)
        first = np.unique(self.alloc, return_index=True)[1]
        assert np.all(np.diff(first) > 0), "labels not in order of first appearance"
        assert np.all(self.skew_latent >= 0)
        assert np.all(self.scale_latent > 0)
        assert abs(self.weights.sum() + self.rest_weight - 1.0) < 1e-10
        assert self.alpha > 0
        assert len(self.base_component_of) == k


@dataclass
class PosteriorDraws:
    """Thinned post-burn-in draws plus full per-sweep traces.

    ``partitions``, ``cluster_params``, ``alpha_trace``, ``k_trace`` and
    ``logdensity_trace`` all have one entry per stored draw. The ``full_*``
    arrays hold every sweep, burn-in included, for convergence diagnostics.
    """

    partitions: list
    cluster_params: list
    alpha_trace: np.ndarray
    k_trace: np.ndarray
    logdensity_trace: np.ndarray
    acceptance_rate: float
    full_logdensity: np.ndarray
    full_k: np.ndarray
    full_alpha: np.ndarray
    mode: str = "st"
    seed: int = 0
    runtime: float = 0.0
    thin: int = 1

    @property
    def n_draws(self):
        return len(self.partitions)

    def same_draws(self, other):
        """True when both objects hold bit-identical draws."""
        if self.n_draws != other.n_draws:
            return False
        for a, b in zip(self.partitions, other.partitions):
            if not np.array_equal(a, b):
                return False
        for ca, cb in zip(self.cluster_params, other.cluster_params):
            if len(ca) != len(cb):
                return False
            for pa, pb in zip(ca, cb):
                if not (np.array_equal(pa.xi, pb.xi) and np.array_equal(pa.psi, pb.psi)
                        and pa.sigma == pb.sigma and pa.nu == pb.nu):
                    return False
        return (np.array_equal(self.alpha_trace, other.alpha_trace)
                and np.array_equal(self.logdensity_trace, other.logdensity_trace)
                and np.array_equal(self.full_logdensity, other.full_logdensity)
                and np.array_equal(self.acceptance_rate, other.acceptance_rate,
                                   equal_nan=True))


# --- densities ---------------------------------------------------------------

def _whitened_terms(diff, psi, sigma):
    """Return ``m = e' S^-1 e``, ``r = psi' S^-1 e`` and ``p = psi' S^-1 psi``."""
    z = sigma.half_solve(diff.T)
    v = sigma.half_solve(psi)
    m = np.einsum("ij,ij->j", z, z)
    r = v @ z
    p = float(v @ v)
    return m, r, p


def _logdensity_from_terms(m, r, p, logdet_sigma, d, nu, mode):
    # Omega = Sigma + psi psi' has log|Omega| = log|Sigma| + log(1 + p),
    # Q = m - r^2 / (1 + p) and eta' w^-1 (y - xi) = r / sqrt(1 + p)
    logdet = logdet_sigma + np.log1p(p)
    q = np.maximum(m - r * r / (1.0 + p), 0.0)
    lin = r / np.sqrt(1.0 + p)
    if mode == "sn" or np.isinf(nu):
        return _LOG_2 - 0.5 * (d * _LOG_2PI + logdet + q) + log_ndtr(lin)
    log_t = (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu) - 0.5 * d * (np.log(nu) + _LOG_PI)
             - 0.5 * logdet - 0.5 * (nu + d) * np.log1p(q / nu))
    return _LOG_2 + log_t + student_logcdf(lin * np.sqrt((nu + d) / (nu + q)), nu + d)


def cluster_marginal_logdensity(y, cp, mode):
    """Log density of ``y`` under one atom with both latents integrated out.

    Evaluated directly from the random-effects parameters, which avoids
    forming ``Omega`` explicitly.

    Parameters
    ----------
    y : array of shape (d,) or (n, d)
    cp : ClusterParams
    mode : {"sn", "st"}
        ``"sn"`` ignores ``cp.nu`` and returns the skew-normal density.
    """
    mode = _normalize_mode(mode)
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    rows = y.reshape(1, -1) if single else y
    if rows.shape[1] != cp.dim:
        raise ConfigError(f"expected points of dimension {cp.dim}, got shape {y.shape}")
    m, r, p = _whitened_terms(rows - cp.xi, cp.psi, cp.sigma)
    out = _logdensity_from_terms(m, r, p, cp.sigma.logdet, cp.dim, cp.nu, mode)
    return float(out[0]) if single else out


# --- step 1: concentration ----------------------------------------------------

def alpha_mixture_params(prior, n_clusters, n_obs, x):
    """Gamma-mixture conditional of ``alpha`` given the auxiliary ``x``.

    Returns
    -------
    weight : float
        Probability of the first component.
    shapes : tuple of float
        ``(a + K, a + K - 1)``.
    rate : float
        ``b - log x`` shared by both components.
    """
    rate = prior.b - np.log(x)
    odds = (prior.a + n_clusters - 1.0) / (n_obs * rate)
    return odds / (1.0 + odds), (prior.a + n_clusters, prior.a + n_clusters - 1.0), rate


def update_alpha(state, prior, rng):
    """Redraw the DP concentration and store it in ``state.alpha``."""
    k = state.n_clusters
    n = state.alloc.shape[0]
    x = rng.beta(state.alpha + 1.0, n)
    x = min(max(x, np.finfo(float).tiny), 1.0 - np.finfo(float).eps)
    weight, shapes, rate = alpha_mixture_params(prior, k, n, x)
    shape = shapes[0] if rng.random() < weight else shapes[1]
    state.alpha = max(rng.gamma(shape, 1.0 / rate), np.finfo(float).tiny)
    return state.alpha


# --- step 2: slice sampler ----------------------------------------------------

def _draw_atom(base, rng, mode):
    m = int(rng.choice(len(base.weights), p=base.weights)) if len(base.weights) > 1 else 0
    xi, psi, sigma = rsniw(base.components[m], rng)
    nu = base.nu_prior.sample(rng) if mode == "st" else np.inf
    return ClusterParams(xi, psi, sigma, nu), m


def _compact(alloc):
    """Relabel by order of first appearance; return new alloc and kept atom ids."""
    uniq, first, inv = np.unique(alloc, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inv.ravel()], uniq[order]


def _map(executor, fn, items):
    if executor is None:
        return [fn(i) for i in items]
    return list(executor.map(fn, items))


def update_sticks_and_alloc(state, data, base, rng, executor=None):
    """Slice-sampler update of weights and allocations.

    Draws ``(w_1..w_K, w_*) ~ Dirichlet(n_1..n_K, alpha)``, slice variables
    ``u_c ~ U(0, w_{l_c})``, breaks the remaining stick until it is smaller
    than ``min(u)``, then allocates every observation among the atoms whose
    weight exceeds its slice variable, with probability proportional to the
    atom's marginal density. Empty atoms are dropped and labels compacted.
    """
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n = y.shape[0]
    counts = state.counts()
    g = rng.standard_gamma(np.append(counts, state.alpha).astype(float))
    total = g.sum()
    weights = list(g[:-1] / total)
    rest = g[-1] / total
    atoms = list(state.clusters)
    comps = list(state.base_component_of)
    u = rng.random(n) * np.asarray(weights)[state.alloc]
    umin = u.min()
    while rest > umin:
        if len(atoms) >= MAX_ATOMS:
            raise DegenerateSliceError(
                f"stick extension exceeded {MAX_ATOMS} atoms (remaining mass {rest:g})")
        beta = rng.beta(1.0, state.alpha)
        weights.append(rest * beta)
        rest = rest * (1.0 - beta)
        atom, comp = _draw_atom(base, rng, state.mode)
        atoms.append(atom)
        comps.append(comp)
    weights = np.asarray(weights)
    uniform = rng.random(n)

    def column(k):
        idx = np.flatnonzero(u < weights[k])
        if idx.size == 0:
            return idx, idx
        return idx, cluster_marginal_logdensity(y[idx], atoms[k], state.mode)

    logp = np.full((n, len(atoms)), -np.inf)
    for k, (idx, vals) in enumerate(_map(executor, column, range(len(atoms)))):
        logp[idx, k] = vals
    mx = logp.max(axis=1, keepdims=True)
    ok = np.isfinite(mx[:, 0])
    prob = np.exp(logp - np.where(ok[:, None], mx, 0.0))
    cum = np.cumsum(prob, axis=1)
    choice = np.sum(cum < uniform[:, None] * cum[:, -1:], axis=1)
    choice = np.minimum(choice, len(atoms) - 1)
    alloc = np.where(ok, choice, state.alloc)

    alloc, kept = _compact(alloc)
    state.alloc = alloc
    state.clusters = [atoms[k] for k in kept]
    state.base_component_of = np.asarray([comps[k] for k in kept], dtype=int)
    state.weights = weights[kept]
    state.rest_weight = 1.0 - state.weights.sum()
    return state


# --- step 3: latent skew and scale ------------------------------------------

def skew_latent_params(diff, psi, sigma, gamma=1.0):
    """Truncated-normal parameters ``(a, A)`` of ``s | y, gamma``.

    ``A = 1 / (gamma (1 + psi' S^-1 psi))`` and
    ``a = psi' S^-1 (y - xi) / (1 + psi' S^-1 psi)``.
    """
    diff = np.atleast_2d(np.asarray(diff, dtype=float))
    _, r, p = _whitened_terms(diff, np.asarray(psi, float), sigma)
    a = r / (1.0 + p)
    var = 1.0 / (np.asarray(gamma, float) * (1.0 + p))
    if a.shape[0] == 1:
        return float(a[0]), float(np.ravel(var)[0])
    return a, var


def scale_latent_params(nu, dim, s, maha):
    """Gamma ``(shape, rate)`` of ``gamma | y, s`` where ``maha = e' S^-1 e``."""
    return 0.5 * (nu + dim + 1.0), 0.5 * (nu + np.asarray(s) ** 2 + np.asarray(maha))


def update_skew_latent(state, data, rng):
    """Redraw the latent skew variables for every observation.

    Skew-normal mode draws ``s_c ~ N+(a_c, A_c)`` with ``gamma_c = 1``.
    Skew-t mode draws ``(s_c, gamma_c)`` jointly: ``s_c`` from its
    distribution with ``gamma_c`` integrated out, a Student-t with
    ``nu + d`` degrees of freedom truncated to ``[0, inf)``, then
    ``gamma_c | s_c`` from its Gamma full conditional.
    """
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n, d = y.shape
    m = np.empty(n)
    r = np.empty(n)
    p = np.empty(n)
    nu = np.empty(n)
    for k, cp in enumerate(state.clusters):
        idx = np.flatnonzero(state.alloc == k)
        m[idx], r[idx], p[idx] = _whitened_terms(y[idx] - cp.xi, cp.psi, cp.sigma)
        nu[idx] = cp.nu
    a = r / (1.0 + p)
    if state.mode == "sn":
        state.skew_latent = rtruncnorm_pos(a, 1.0 / (1.0 + p), rng)
        state.scale_latent = np.ones(n)
        return state
    const = np.maximum(m - r * a, 0.0)
    scale = np.sqrt((nu + const) / ((nu + d) * (1.0 + p)))
    s = rtrunct_pos(a, scale, nu + d, rng)
    maha = np.maximum(m - 2.0 * s * r + s * s * p, 0.0)
    shape, rate = scale_latent_params(nu, d, s, maha)
    state.skew_latent = s
    state.scale_latent = np.maximum(rng.standard_gamma(shape) / rate, np.finfo(float).tiny)
    return state


# --- step 4: cluster parameters ------------------------------------------------

def sniw_posterior(prior, y, s, gamma=None, jitter=0.0):
    """Conjugate sNiW posterior given members, latent skews and scales.

    With design rows ``x_c = (1, s_c)`` and weights ``gamma_c``:
    ``B_k = (X' G X + B0^-1)^-1``, ``M_k = B_k (X' G Y + B0^-1 M0)``,
    ``Lambda_k = Lambda0 + sum_c gamma_c e_c e_c' + (M_k - M0)' B0^-1 (M_k - M0)``
    with ``e_c = y_c - M_k' x_c`` and ``lambda_k = lambda0 + n``.
    """
    y = np.atleast_2d(np.asarray(y, dtype=float))
    n = y.shape[0]
    if n == 0:
        if jitter == 0:
            return prior
        scale = prior.lambda_scale.values + jitter * np.eye(prior.dim)
        return SNiWParams(prior.b_xi, prior.b_psi, prior.b_cov, SpdMatrix(scale),
                          prior.lambda_dof)
    s = np.asarray(s, dtype=float)
    g = np.ones(n) if gamma is None else np.asarray(gamma, dtype=float)
    x = np.column_stack((np.ones(n), s))
    gx = g[:, None] * x
    b0_inv = prior.b_cov.inv
    m0 = prior.b
    prec = x.T @ gx + b0_inv
    b_k = np.linalg.inv(prec)
    b_k = 0.5 * (b_k + b_k.T)
    m_k = b_k @ (gx.T @ y + b0_inv @ m0)
    resid = y - x @ m_k
    dm = m_k - m0
    scale = prior.lambda_scale.values + resid.T @ (g[:, None] * resid) + dm.T @ b0_inv @ dm
    scale = 0.5 * (scale + scale.T)
    if jitter:
        scale = scale + jitter * np.eye(prior.dim)
    return SNiWParams(m_k[0], m_k[1], SpdMatrix(b_k), SpdMatrix(scale), prior.lambda_dof + n)


def base_log_density(cp, base):
    """Log density of ``(xi, psi, Sigma)`` under the base sNiW mixture."""
    terms = [np.log(w) + sniw_logpdf(cp.xi, cp.psi, cp.sigma, h)
             for w, h in zip(base.weights, base.components)]
    return float(logsumexp(terms))


def update_cluster_params(state, data, base, rng, jitter=0.0, executor=None):
    """Redraw base indicators ``h_k`` and then ``(xi_k, psi_k, Sigma_k)``."""
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n_base = len(base.components)
    k_all = state.n_clusters
    if n_base > 1:
        logw = np.log(base.weights)
        u = rng.random(k_all)
        comps = np.empty(k_all, dtype=int)
        for k, cp in enumerate(state.clusters):
            lp = logw + np.array([sniw_logpdf(cp.xi, cp.psi, cp.sigma, h)
                                  for h in base.components])
            prob = np.exp(lp - lp.max())
            cum = np.cumsum(prob)
            comps[k] = min(int(np.sum(cum < u[k] * cum[-1])), n_base - 1)
        state.base_component_of = comps
    else:
        state.base_component_of = np.zeros(k_all, dtype=int)

    order = np.argsort(state.alloc, kind="stable")
    bounds = np.cumsum(np.append(0, state.counts()))

    def posterior(k):
        idx = order[bounds[k]:bounds[k + 1]]
        prior = base.components[state.base_component_of[k]]
        return sniw_posterior(prior, y[idx], state.skew_latent[idx],
                              state.scale_latent[idx], jitter)

    posts = _map(executor, posterior, range(k_all))
    new = []
    for k, h in enumerate(posts):
        xi, psi, sigma = rsniw(h, rng)
        new.append(ClusterParams(xi, psi, sigma, state.clusters[k].nu))
    state.clusters = new
    return state


# --- step 5: degrees of freedom and latent scales -----------------------------

def nu_conditional_loglik(nu, s, maha, dim):
    """``sum_c log p(y_c, s_c | nu, theta)`` with ``gamma_c`` integrated out.

    Only the terms that depend on ``nu`` are kept.
    """
    s = np.asarray(s, float)
    maha = np.asarray(maha, float)
    half = 0.5 * (nu + dim + 1.0)
    per = (0.5 * nu * np.log(0.5 * nu) - gammaln(0.5 * nu) + gammaln(half)
           - half * np.log(0.5 * (nu + s * s + maha)))
    return float(np.sum(per))


def update_nu_and_scale(state, data, nu_prior, c_nu, rng):
    """Metropolis-Hastings on every ``nu_k``, then redraw every ``gamma_c``.

    The proposal is ``log(nu' - 1) = log(nu - 1) + U(-c_nu, c_nu)`` with
    Jacobian factor ``(nu' - 1) / (nu - 1)``. The target conditions on the
    latent skews and integrates the latent scales out, so drawing
    ``gamma_c | nu, s_c`` right after completes an exact joint update.

    Returns
    -------
    n_accepted, n_proposed : int
    """
    if state.mode != "st":
        return 0, 0
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n, d = y.shape
    k_all = state.n_clusters
    steps = rng.uniform(-c_nu, c_nu, k_all)
    log_u = np.log(rng.random(k_all))
    s = state.skew_latent
    maha = np.empty(n)
    nu_obs = np.empty(n)
    accepted = 0
    new = []
    for k, cp in enumerate(state.clusters):
        idx = np.flatnonzero(state.alloc == k)
        e = y[idx] - cp.xi - s[idx, None] * cp.psi
        maha[idx] = np.atleast_1d(cp.sigma.quad(e))
        nu = cp.nu
        prop = 1.0 + (nu - 1.0) * np.exp(steps[k])
        log_ratio = (nu_prior.logpdf(prop) - nu_prior.logpdf(nu)
                     + nu_conditional_loglik(prop, s[idx], maha[idx], d)
                     - nu_conditional_loglik(nu, s[idx], maha[idx], d)
                     + np.log(prop - 1.0) - np.log(nu - 1.0))
        if np.isfinite(prop) and log_u[k] < log_ratio:
            cp = cp.with_nu(prop)
            accepted += 1
        new.append(cp)
        nu_obs[idx] = cp.nu
    state.clusters = new
    shape, rate = scale_latent_params(nu_obs, d, s, maha)
    state.scale_latent = np.maximum(rng.standard_gamma(shape) / rate, np.finfo(float).tiny)
    return accepted, k_all


# --- chain driver -------------------------------------------------------------

def log_joint_density(state, data, base, prior):
    """Log of ``p(y | l, theta) p(l | alpha) p(alpha) prod_k G0(theta_k)``.

    The observation term integrates out both latents.
    """
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n = y.shape[0]
    counts = state.counts()
    k_all = state.n_clusters
    total = 0.0
    for k, cp in enumerate(state.clusters):
        idx = np.flatnonzero(state.alloc == k)
        total += float(np.sum(cluster_marginal_logdensity(y[idx], cp, state.mode)))
        total += base_log_density(cp, base)
        if state.mode == "st":
            total += base.nu_prior.logpdf(cp.nu)
    a = state.alpha
    total += k_all * np.log(a) + float(np.sum(gammaln(counts))) + gammaln(a) - gammaln(a + n)
    total += prior.logpdf(a)
    return total


def initial_state(data, base, prior, cfg, rng):
    """k-means seeded starting state.

    Cluster locations are the k-means centres, skews are zero and scales are
    the conjugate posterior mean of ``Sigma`` under the first base component.
    """
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n, d = y.shape
    k = min(cfg.n_init_clusters, n)
    if k > 1:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            _, alloc = kmeans2(y, k, minit="++", rng=rng)
    else:
        alloc = np.zeros(n, dtype=int)
    return state_from_partition(y, alloc, base, prior, cfg.mode)


def state_from_partition(data, alloc, base, prior, mode):
    """Build a chain state from a given partition (labels in any coding)."""
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    n, d = y.shape
    alloc, _ = _compact(np.asarray(alloc))
    mode = _normalize_mode(mode)
    h0 = base.components[0]
    clusters = []
    for k in range(alloc.max() + 1):
        members = y[alloc == k]
        centre = members.mean(axis=0)
        dev = members - centre
        scale = (h0.lambda_scale.values + dev.T @ dev) / (h0.lambda_dof + len(members) - d - 1)
        nu = _INIT_NU if mode == "st" else np.inf
        clusters.append(ClusterParams(centre, np.zeros(d), SpdMatrix(0.5 * (scale + scale.T)), nu))
    k_all = len(clusters)
    weights = np.bincount(alloc) / (n + 1.0)
    return ChainState(alloc=alloc, skew_latent=np.full(n, 0.5), scale_latent=np.ones(n),
                      weights=weights, rest_weight=1.0 - weights.sum(),
                      alpha=prior.a / prior.b, clusters=clusters,
                      base_component_of=np.zeros(k_all, dtype=int), mode=mode)


def canonicalize_state(state):
    """Return a copy with labels renumbered by order of first appearance."""
    alloc, kept = _compact(state.alloc)
    out = state.copy()
    out.alloc = alloc
    out.clusters = [state.clusters[k] for k in kept]
    out.base_component_of = state.base_component_of[kept]
    out.weights = state.weights[kept]
    out.rest_weight = 1.0 - out.weights.sum()
    return out


def sweep(state, data, base, prior, cfg, iteration, executor=None):
    """Run one full sweep in place; return ``(n_accepted, n_proposed)``."""
    seed = cfg.seed
    update_alpha(state, prior, make_rng(seed, 1, iteration, 1))
    update_sticks_and_alloc(state, data, base, make_rng(seed, 1, iteration, 2), executor)
    update_skew_latent(state, data, make_rng(seed, 1, iteration, 3))
    update_cluster_params(state, data, base, make_rng(seed, 1, iteration, 4),
                          cfg.jitter, executor)
    if state.mode == "st":
        return update_nu_and_scale(state, data, base.nu_prior, cfg.c_nu,
                                   make_rng(seed, 1, iteration, 5))
    return 0, 0


def run_chain(data, base, prior, cfg, init=None, callback=None):
    """Run one chain and return the stored draws.

    Parameters
    ----------
    data : DataMatrix
    base : BaseMeasure
    prior : ConcentrationPrior
    cfg : ChainConfig
    init : ChainState, optional
        Starting state; relabelled by first appearance before use. When
        omitted the chain starts from a k-means partition.
    callback : callable, optional
        Called as ``callback(iteration, state)`` after every sweep.

    Raises
    ------
    ChainFailureError
        If the log joint density becomes non-finite.
    DegenerateSliceError
        If the stick extension runs away.
    """
    if not isinstance(data, DataMatrix):
        data = DataMatrix(data)
    if base.dim != data.dim:
        raise ConfigError(f"base measure has dimension {base.dim}, data has {data.dim}")
    if data.n_obs < 2:
        raise ConfigError("at least two observations are required")
    if init is None:
        state = initial_state(data, base, prior, cfg, make_rng(cfg.seed, 0, 0, 0))
    else:
        if init.mode != cfg.mode:
            raise ConfigError("initial state mode differs from the chain mode")
        state = canonicalize_state(init)

    n_iter = cfg.n_iter
    full_ld = np.empty(n_iter)
    full_k = np.empty(n_iter, dtype=int)
    full_alpha = np.empty(n_iter)
    partitions, params, stored = [], [], []
    accepted = proposed = 0
    start = time.perf_counter()
    executor = ThreadPoolExecutor(cfg.n_threads) if cfg.parallel else None
    try:
        for it in range(n_iter):
            try:
                acc, prop = sweep(state, data, base, prior, cfg, it, executor)
                ld = log_joint_density(state, data, base, prior)
            except NotPositiveDefiniteError as exc:
                raise ChainFailureError(it, f"degenerate scale matrix: {exc}") from exc
            if not np.isfinite(ld):
                raise ChainFailureError(it)
            accepted += acc
            proposed += prop
            full_ld[it] = ld
            full_k[it] = state.n_clusters
            full_alpha[it] = state.alpha
            if it >= cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
                partitions.append(state.labels.copy())
                params.append(list(state.clusters))
                stored.append(it)
            if callback is not None:
                callback(it, state)
    finally:
        if executor is not None:
            executor.shutdown()
    stored = np.asarray(stored, dtype=int)
    return PosteriorDraws(
        partitions=partitions,
        cluster_params=params,
        alpha_trace=full_alpha[stored],
        k_trace=full_k[stored],
        logdensity_trace=full_ld[stored],
        acceptance_rate=(accepted / proposed) if proposed else float("nan"),
        full_logdensity=full_ld,
        full_k=full_k,
        full_alpha=full_alpha,
        mode=cfg.mode,
        seed=cfg.seed,
        runtime=time.perf_counter() - start,
        thin=cfg.thin,
    )
