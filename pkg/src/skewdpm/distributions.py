"""Densities, samplers and parameter conversions used by the mixture model.

Two parametrizations of the multivariate skew-normal are used throughout:

* the random-effects form ``(xi, psi, sigma)`` where
  ``y = xi + psi * z + eps`` with ``z ~ N+(0, 1)`` and ``eps ~ N(0, sigma)``;
* the canonical form ``(xi, omega_mat, eta)`` with density
  ``2 phi(y - xi; Omega) Phi(eta' w^{-1} (y - xi))``.

The skew-t adds a Gamma(nu/2, nu/2) scale mixing variable.
"""

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import (betainc, betaln, gammaln, log_ndtr, multigammaln, ndtr,
                           ndtri, stdtrit)

from .exceptions import ConfigError, NumericalDomainError
from .linalg import SpdMatrix

_LOG_2 = np.log(2.0)
_LOG_PI = np.log(np.pi)
_LOG_2PI = np.log(2.0 * np.pi)
_TAIL_SWITCH = -4.0


@dataclass(frozen=True)
class RngStream:
    """Reproducible random stream keyed by a seed and a stream id.

    Identical ``(seed, stream_id)`` pairs always yield identical draw
    sequences; distinct ids give statistically independent streams.
    """

    seed: int
    stream_id: tuple = ()

    def generator(self):
        ss = np.random.SeedSequence(self.seed, spawn_key=tuple(int(k) for k in self.stream_id))
        return np.random.Generator(np.random.PCG64(ss))


def make_rng(seed, *stream_id):
    """Shorthand for ``RngStream(seed, stream_id).generator()``."""
    return RngStream(int(seed), tuple(stream_id)).generator()


@dataclass(frozen=True)
class SkewNormalParams:
    """Random-effects parametrization ``(xi, psi, sigma)``."""

    xi: np.ndarray
    psi: np.ndarray
    sigma: SpdMatrix

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        sigma = self.sigma if isinstance(self.sigma, SpdMatrix) else SpdMatrix(self.sigma)
        if not (xi.shape == psi.shape == (sigma.dim,)):
            raise ConfigError(
                f"inconsistent dimensions: xi {xi.shape}, psi {psi.shape}, sigma {sigma.dim}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "sigma", sigma)

    @property
    def dim(self):
        return self.xi.shape[0]


@dataclass(frozen=True)
class SkewNormalCanonical:
    """Canonical parametrization ``(xi, omega_mat, eta)``."""

    xi: np.ndarray
    omega_mat: SpdMatrix
    eta: np.ndarray

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        eta = np.atleast_1d(np.asarray(self.eta, dtype=float))
        om = self.omega_mat if isinstance(self.omega_mat, SpdMatrix) else SpdMatrix(self.omega_mat)
        if not (xi.shape == eta.shape == (om.dim,)):
            raise ConfigError("inconsistent dimensions in canonical skew-normal parameters")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "omega_mat", om)

    @property
    def omega(self):
        """Scale vector ``sqrt(diag(Omega))``."""
        return np.sqrt(np.diag(self.omega_mat.values))

    @property
    def dim(self):
        return self.xi.shape[0]


@dataclass(frozen=True)
class SkewTParams:
    """Skew-t parameters: random-effects skew-normal part plus ``nu``."""

    base: SkewNormalParams
    nu: float

    def __post_init__(self):
        if not self.nu > 0:
            raise ConfigError(f"nu must be positive, got {self.nu}")


def convert_re_to_canonical(p):
    """Map random-effects parameters to the canonical skew-normal form.

    ``Omega = Sigma + psi psi'`` and
    ``eta = (1 - psi' Omega^{-1} psi)^{-1/2} w Omega^{-1} psi``.
    """
    psi = p.psi
    try:
        omega_mat = SpdMatrix(p.sigma.values + np.outer(psi, psi))
    except Exception as exc:
        raise NumericalDomainError(f"Sigma + psi psi' is not SPD: {exc}") from exc
    om_inv_psi = omega_mat.solve(psi)
    slack = 1.0 - float(psi @ om_inv_psi)
    if not slack > 0:
        raise NumericalDomainError(f"1 - psi' Omega^-1 psi = {slack} is not positive")
    omega = np.sqrt(np.diag(omega_mat.values))
    eta = omega * om_inv_psi / np.sqrt(slack)
    return SkewNormalCanonical(p.xi.copy(), omega_mat, eta)


def convert_canonical_to_re(p):
    """Inverse of :func:`convert_re_to_canonical`.

    With ``u = w^{-1} eta`` and ``q = u' Omega u`` one has
    ``psi = Omega u / sqrt(1 + q)`` and ``Sigma = Omega - psi psi'``.
    """
    u = p.eta / p.omega
    om = p.omega_mat.values
    om_u = om @ u
    q = float(u @ om_u)
    psi = om_u / np.sqrt(1.0 + q)
    try:
        sigma = SpdMatrix(om - np.outer(psi, psi))
    except Exception as exc:
        raise NumericalDomainError(f"Omega - psi psi' is not SPD: {exc}") from exc
    return SkewNormalParams(p.xi.copy(), psi, sigma)


def _as_rows(y, dim):
    y = np.asarray(y, dtype=float)
    single = y.ndim == 1
    rows = y.reshape(1, -1) if single else y
    if rows.ndim != 2 or rows.shape[1] != dim:
        raise ConfigError(f"expected points of dimension {dim}, got shape {y.shape}")
    return rows, single


def _ret(values, single):
    return float(values[0]) if single else values


def mvn_logpdf(y, mean, cov):
    """Multivariate normal log density for a point or stack of rows."""
    rows, single = _as_rows(y, cov.dim)
    q = cov.quad(rows - mean)
    out = -0.5 * (cov.dim * _LOG_2PI + cov.logdet + q)
    return _ret(np.atleast_1d(out), single)


def mvt_logpdf(y, xi, omega_mat, nu):
    """Multivariate Student-t log density with location ``xi`` and scale ``Omega``."""
    if not nu > 0:
        raise ConfigError(f"nu must be positive, got {nu}")
    d = omega_mat.dim
    rows, single = _as_rows(y, d)
    q = np.atleast_1d(omega_mat.quad(rows - xi))
    if np.isinf(nu):
        out = -0.5 * (d * _LOG_2PI + omega_mat.logdet + q)
    else:
        out = (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu)
               - 0.5 * d * (np.log(nu) + _LOG_PI) - 0.5 * omega_mat.logdet
               - 0.5 * (nu + d) * np.log1p(q / nu))
    return _ret(out, single)


def student_cdf(x, nu):
    """CDF of the standard Student-t through the regularized incomplete beta.

    ``T_nu(x) = 1 - I_{nu/(nu+x^2)}(nu/2, 1/2) / 2`` for ``x >= 0`` and the
    mirror image for ``x < 0``.
    """
    if not np.all(np.asarray(nu) > 0):
        raise ConfigError("nu must be positive")
    x = np.asarray(x, dtype=float)
    tail = 0.5 * betainc(0.5 * nu, 0.5, nu / (nu + x * x))
    out = np.where(x > 0, 1.0 - tail, tail)
    if out.ndim == 0:
        return float(out)
    return out


def student_logcdf(x, nu):
    """Log Student-t CDF, accurate deep in the lower tail."""
    x = np.asarray(x, dtype=float)
    nu = np.asarray(nu, dtype=float)
    t = nu / (nu + x * x)
    a = 0.5 * nu
    tail = 0.5 * betainc(a, 0.5, t)
    with np.errstate(divide="ignore"):
        out = np.where(x > 0, np.log1p(-tail), np.log(tail))
    small = (x <= 0) & (tail < 1e-280)
    if np.any(small):
        # leading term of I_t(a, 1/2) as t -> 0
        approx = np.log(0.5) + a * np.log(t) - np.log(a) - betaln(a, 0.5)
        out = np.where(small, approx, out)
    return out


def sn_logpdf(y, p):
    """Skew-normal log density in canonical parametrization."""
    rows, single = _as_rows(y, p.dim)
    diff = rows - p.xi
    q = p.omega_mat.quad(diff)
    lin = diff @ (p.eta / p.omega)
    out = _LOG_2 - 0.5 * (p.dim * _LOG_2PI + p.omega_mat.logdet + q) + log_ndtr(lin)
    return _ret(np.atleast_1d(out), single)


def st_logpdf(y, p, canonical=None):
    """Skew-t log density.

    Parameters
    ----------
    y : array of shape (d,) or (n, d)
    p : SkewTParams
    canonical : SkewNormalCanonical, optional
        Precomputed canonical form of ``p.base``; saves the conversion when
        the same parameters are evaluated repeatedly.
    """
    c = canonical if canonical is not None else convert_re_to_canonical(p.base)
    nu = p.nu
    if np.isinf(nu):
        return sn_logpdf(y, c)
    d = c.dim
    rows, single = _as_rows(y, d)
    diff = rows - c.xi
    q = np.atleast_1d(c.omega_mat.quad(diff))
    lin = diff @ (c.eta / c.omega)
    log_t = (gammaln(0.5 * (nu + d)) - gammaln(0.5 * nu)
             - 0.5 * d * (np.log(nu) + _LOG_PI) - 0.5 * c.omega_mat.logdet
             - 0.5 * (nu + d) * np.log1p(q / nu))
    arg = lin * np.sqrt((nu + d) / (nu + q))
    out = _LOG_2 + log_t + student_logcdf(arg, nu + d)
    return _ret(out, single)


def rtruncnorm_pos(mean, var, rng):
    """Draw from ``N(mean, var)`` restricted to ``[0, +inf)``.

    Vectorized over ``mean``/``var``. Inverse-cdf sampling is used unless
    ``mean / sd < -4``; deeper in the tail an exponential-proposal rejection
    sampler (Robert 1995) takes over.
    """
    mean = np.asarray(mean, dtype=float)
    var = np.asarray(var, dtype=float)
    if np.any(~(var > 0)):
        raise ConfigError("truncated normal variance must be positive")
    mean, var = np.broadcast_arrays(mean, var)
    shape = mean.shape
    mean = mean.ravel()
    sd = np.sqrt(var.ravel())
    z_mean = mean / sd
    lower = -z_mean  # standardized truncation point
    out = np.empty_like(mean)
    u = rng.random(mean.shape[0])

    body = z_mean >= _TAIL_SWITCH
    if np.any(body):
        # Z | Z > lower via the survival function, stable for lower > 0
        p = u[body] * ndtr(z_mean[body])
        out[body] = -ndtri(p)
    tail = np.flatnonzero(~body)
    if tail.size:
        a = lower[tail]
        rate = 0.5 * (a + np.sqrt(a * a + 4.0))
        res = np.empty(tail.size)
        todo = np.arange(tail.size)
        while todo.size:
            z = a[todo] + rng.exponential(1.0, todo.size) / rate[todo]
            accept = rng.random(todo.size) <= np.exp(-0.5 * (z - rate[todo]) ** 2)
            res[todo[accept]] = z[accept]
            todo = todo[~accept]
        out[tail] = res
    out = mean + sd * out
    np.maximum(out, 0.0, out=out)
    out = out.reshape(shape)
    return float(out) if out.ndim == 0 else out


def rtrunct_pos(loc, scale, df, rng):
    """Draw from a location-scale Student-t restricted to ``[0, +inf)``.

    Inverse survival-function sampling, vectorized over all arguments.
    """
    loc, scale, df = np.broadcast_arrays(
        np.asarray(loc, float), np.asarray(scale, float), np.asarray(df, float))
    lower = -loc / scale
    # survival of the lower bound: P(T > lower) = T(-lower)
    sf_lower = student_cdf(-lower, df)
    u = rng.random(loc.shape)
    p = u * sf_lower
    p = np.where(p > 0, p, np.finfo(float).tiny)
    t = -stdtrit(df, p)
    t = np.where(np.isfinite(t), np.maximum(t, lower), lower)
    return np.maximum(loc + scale * t, 0.0)


def rinvwishart(lam, scale, rng):
    """Inverse-Wishart draw ``IW(lam, scale)`` by the Bartlett decomposition.

    The mean is ``scale / (lam - d - 1)`` for ``lam > d + 1``.
    """
    d = scale.dim
    if not lam > d - 1:
        raise ConfigError(f"inverse-Wishart dof must exceed d - 1 = {d - 1}, got {lam}")
    a = np.zeros((d, d))
    a[np.diag_indices(d)] = np.sqrt(rng.chisquare(lam - np.arange(d)))
    il = np.tril_indices(d, -1)
    a[il] = rng.standard_normal(len(il[0]))
    # Sigma^{-1} = U^{-T} A A' U^{-1} with scale = U U'
    x = solve_triangular(a, scale.chol.T, lower=True)
    sigma = x.T @ x
    return SpdMatrix(0.5 * (sigma + sigma.T))


def invwishart_logpdf(sigma, lam, scale):
    d = scale.dim
    return (0.5 * lam * scale.logdet - 0.5 * lam * d * _LOG_2 - multigammaln(0.5 * lam, d)
            - 0.5 * (lam + d + 1) * sigma.logdet
            - 0.5 * float(np.sum(scale.values * sigma.inv)))


def rsniw(h, rng):
    """Draw ``(xi, psi, sigma)`` from a structured Normal inverse-Wishart.

    ``sigma ~ IW(lambda, Lambda)`` and ``vec(xi, psi) | sigma ~ N(b, B kron sigma)``.
    """
    sigma = rinvwishart(h.lambda_dof, h.lambda_scale, rng)
    z = rng.standard_normal((h.dim, 2))
    m = sigma.chol @ z @ h.b_cov.chol.T
    return h.b_xi + m[:, 0], h.b_psi + m[:, 1], sigma


def sniw_logpdf(xi, psi, sigma, h):
    """Log density of the structured Normal inverse-Wishart at ``(xi, psi, sigma)``."""
    d = h.dim
    xi = np.asarray(xi, float)
    psi = np.asarray(psi, float)
    if xi.shape != (d,) or psi.shape != (d,) or sigma.dim != d:
        raise ConfigError("dimension mismatch in sniw_logpdf")
    r = np.column_stack((xi - h.b_xi, psi - h.b_psi))
    # vec(R)' (B kron Sigma)^{-1} vec(R) = tr(B^{-1} R' Sigma^{-1} R)
    quad = float(np.sum(h.b_cov.inv * (r.T @ sigma.solve(r))))
    log_normal = -d * _LOG_2PI - 0.5 * (d * h.b_cov.logdet + 2 * sigma.logdet) - 0.5 * quad
    return invwishart_logpdf(sigma, h.lambda_dof, h.lambda_scale) + log_normal
