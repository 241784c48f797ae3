"""Domain types of the skew-t Dirichlet process mixture and prior utilities."""

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import gammaln

from .exceptions import ConfigError
from .linalg import SpdMatrix

_WEIGHT_TOL = 1e-10


@dataclass(frozen=True)
class DataMatrix:
    """C observations by d markers, with column labels."""

    values: np.ndarray
    columns: Sequence[str] = ()

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v.reshape(-1, 1)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ConfigError(f"data must be a non-empty C x d matrix, got shape {v.shape}")
        if not np.all(np.isfinite(v)):
            raise ConfigError("data contains NaN or infinite values")
        cols = list(self.columns) if len(self.columns) else [f"V{j + 1}" for j in range(v.shape[1])]
        if len(cols) != v.shape[1]:
            raise ConfigError(f"{len(cols)} column names for {v.shape[1]} columns")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "columns", tuple(str(c) for c in cols))

    @property
    def n_obs(self):
        return self.values.shape[0]

    @property
    def dim(self):
        return self.values.shape[1]


@dataclass(frozen=True)
class SNiWParams:
    """Structured Normal inverse-Wishart hyperparameters.

    ``Sigma ~ IW(lambda_dof, lambda_scale)`` and
    ``vec(xi, psi) | Sigma ~ N((b_xi, b_psi), b_cov kron Sigma)``, where
    ``b_cov`` is a 2 x 2 covariance (diagonal in the default prior, full in
    conjugate posteriors and fitted priors).
    """

    b_xi: np.ndarray
    b_psi: np.ndarray
    b_cov: SpdMatrix
    lambda_scale: SpdMatrix
    lambda_dof: float

    def __post_init__(self):
        b_xi = np.atleast_1d(np.asarray(self.b_xi, dtype=float))
        b_psi = np.atleast_1d(np.asarray(self.b_psi, dtype=float))
        b_cov = self.b_cov if isinstance(self.b_cov, SpdMatrix) else SpdMatrix(self.b_cov)
        scale = (self.lambda_scale if isinstance(self.lambda_scale, SpdMatrix)
                 else SpdMatrix(self.lambda_scale))
        d = scale.dim
        if b_xi.shape != (d,) or b_psi.shape != (d,):
            raise ConfigError("sNiW location vectors do not match the scale dimension")
        if b_cov.dim != 2:
            raise ConfigError("sNiW b_cov must be 2 x 2")
        if not self.lambda_dof > d + 1:
            raise ConfigError(f"sNiW lambda must exceed d + 1 = {d + 1}, got {self.lambda_dof}")
        object.__setattr__(self, "b_xi", b_xi)
        object.__setattr__(self, "b_psi", b_psi)
        object.__setattr__(self, "b_cov", b_cov)
        object.__setattr__(self, "lambda_scale", scale)
        object.__setattr__(self, "lambda_dof", float(self.lambda_dof))

    @property
    def dim(self):
        return self.lambda_scale.dim

    @property
    def b(self):
        """Stacked 2 x d location ``[b_xi; b_psi]``."""
        return np.vstack((self.b_xi, self.b_psi))


@dataclass(frozen=True)
class NuPrior:
    """Prior on the skew-t degrees of freedom, supported on ``nu > 1``.

    ``kind="exponential"`` puts ``nu - 1 ~ Exp(rate)``;
    ``kind="uniform"`` puts ``nu - 1 ~ U(lo, hi)``.
    """

    kind: str = "exponential"
    rate: float = 0.1
    lo: float = 0.0
    hi: float = 100.0

    def __post_init__(self):
        if self.kind == "exponential":
            if not self.rate > 0:
                raise ConfigError("exponential nu prior needs a positive rate")
        elif self.kind == "uniform":
            if not (0 <= self.lo < self.hi):
                raise ConfigError("uniform nu prior needs 0 <= lo < hi")
        else:
            raise ConfigError(f"unknown nu prior kind {self.kind!r}")

    def logpdf(self, nu):
        x = nu - 1.0
        if self.kind == "exponential":
            return np.log(self.rate) - self.rate * x if x > 0 else -np.inf
        if self.lo < x < self.hi:
            return -np.log(self.hi - self.lo)
        return -np.inf

    def sample(self, rng):
        if self.kind == "exponential":
            x = rng.exponential(1.0 / self.rate)
        else:
            x = rng.uniform(self.lo, self.hi)
        return 1.0 + max(x, 1e-12)


@dataclass(frozen=True)
class BaseMeasure:
    """Base distribution of the DP: a finite mixture of sNiW times a nu prior."""

    components: tuple
    weights: np.ndarray
    nu_prior: NuPrior = field(default_factory=NuPrior)

    def __post_init__(self):
        comps = tuple(self.components)
        if not comps:
            raise ConfigError("base measure needs at least one component")
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if w.shape != (len(comps),):
            raise ConfigError("one weight per base component is required")
        if np.any(w <= 0) or np.any(w > 1) or abs(w.sum() - 1.0) > _WEIGHT_TOL:
            raise ConfigError("base weights must lie in (0, 1] and sum to 1")
        d = comps[0].dim
        if any(c.dim != d for c in comps):
            raise ConfigError("base components have inconsistent dimensions")
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "weights", w)

    @classmethod
    def single(cls, sniw, nu_prior=None):
        return cls((sniw,), np.ones(1), nu_prior or NuPrior())

    @property
    def dim(self):
        return self.components[0].dim


@dataclass(frozen=True)
class ConcentrationPrior:
    """Gamma(a, b) prior (shape, rate) on the DP concentration."""

    a: float = 0.5
    b: float = 0.125

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0):
            raise ConfigError("concentration prior parameters must be positive")

    def logpdf(self, alpha):
        return (self.a * np.log(self.b) - gammaln(self.a)
                + (self.a - 1) * np.log(alpha) - self.b * alpha)


@dataclass(frozen=True)
class ClusterParams:
    """One mixture atom. ``nu = inf`` denotes a skew-normal atom."""

    xi: np.ndarray
    psi: np.ndarray
    sigma: SpdMatrix
    nu: float = np.inf

    def __post_init__(self):
        xi = np.atleast_1d(np.asarray(self.xi, dtype=float))
        psi = np.atleast_1d(np.asarray(self.psi, dtype=float))
        sigma = self.sigma if isinstance(self.sigma, SpdMatrix) else SpdMatrix(self.sigma)
        if not (xi.shape == psi.shape == (sigma.dim,)):
            raise ConfigError("cluster parameters have inconsistent dimensions")
        if not self.nu > 1:
            raise ConfigError(f"nu must exceed 1, got {self.nu}")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "psi", psi)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "nu", float(self.nu))

    @property
    def dim(self):
        return self.xi.shape[0]

    def with_nu(self, nu):
        return ClusterParams(self.xi, self.psi, self.sigma, nu)


def expected_num_clusters(alpha, n_obs):
    """Prior mean number of clusters among ``n_obs`` draws from DP(alpha)."""
    if not alpha > 0:
        raise ConfigError("alpha must be positive")
    if n_obs < 1:
        raise ConfigError("need at least one observation")
    c = np.arange(int(n_obs), dtype=float)
    return float(np.sum(alpha / (alpha + c)))


def default_hyperparams(data, scale_divisor=3.0, prior_var=100.0, nu_prior=None,
                        concentration=(0.5, 0.125)):
    """Empirical-Bayes default base measure and concentration prior.

    Location prior centred on the column means with zero skew,
    ``B0 = diag(prior_var, prior_var)``, ``Lambda0 = diag(var) / scale_divisor``,
    ``lambda0 = d + 3``.

    Returns
    -------
    base : BaseMeasure
    concentration : ConcentrationPrior
    """
    y = data.values if isinstance(data, DataMatrix) else np.asarray(data, float)
    if y.shape[0] < 2:
        raise ConfigError("at least two observations are needed for default hyperparameters")
    d = y.shape[1]
    var = y.var(axis=0, ddof=1)
    var = np.where(var > 0, var, 1.0)
    sniw = SNiWParams(
        b_xi=y.mean(axis=0),
        b_psi=np.zeros(d),
        b_cov=SpdMatrix(np.diag([prior_var, prior_var])),
        lambda_scale=SpdMatrix(np.diag(var / scale_divisor)),
        lambda_dof=d + 3.0,
    )
    base = BaseMeasure.single(sniw, nu_prior or NuPrior())
    return base, ConcentrationPrior(*concentration)
