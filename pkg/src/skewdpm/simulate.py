"""Synthetic skew-t mixture data."""

import numpy as np

from .exceptions import ConfigError
from .linalg import SpdMatrix
from .model import ClusterParams


def rskewt(n, cp, rng):
    """Draw ``n`` points from a skew-t (or skew-normal if ``nu = inf``) atom.

    Uses ``y = xi + (psi Z + eps) / sqrt(W)`` with ``W ~ Gamma(nu/2, nu/2)``,
    ``Z ~ N+(0, 1)`` and ``eps ~ N(0, Sigma)``.
    """
    d = cp.dim
    z = np.abs(rng.standard_normal(n))
    eps = rng.standard_normal((n, d)) @ cp.sigma.chol.T
    if np.isinf(cp.nu):
        w = np.ones(n)
    else:
        w = rng.gamma(0.5 * cp.nu, 2.0 / cp.nu, n)
    return cp.xi + (z[:, None] * cp.psi + eps) / np.sqrt(w)[:, None]


def component_counts(weights, n):
    """Split ``n`` by largest remainder so counts follow ``weights`` exactly."""
    raw = np.asarray(weights, float) * n
    counts = np.floor(raw).astype(int)
    short = n - counts.sum()
    if short:
        counts[np.argsort(-(raw - counts), kind="stable")[:short]] += 1
    return counts


def simulate_mixture(weights, components, n, rng, exact=True):
    """Draw ``n`` observations from a finite skew-t mixture.

    Parameters
    ----------
    weights : sequence of float
        Mixture weights summing to 1.
    components : sequence of ClusterParams
    n : int
    rng : numpy.random.Generator
    exact : bool, default=True
        Use deterministic component sizes (largest remainder) instead of
        multinomial sizes. Rows are shuffled either way.

    Returns
    -------
    y : ndarray of shape (n, d)
    labels : ndarray of int, values ``1..K``
    """
    w = np.asarray(weights, dtype=float)
    if w.ndim != 1 or len(w) != len(components) or len(w) == 0:
        raise ConfigError("one weight per component is required")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-10:
        raise ConfigError(f"mixture weights must be non-negative and sum to 1, got {w.sum()}")
    if n < 1:
        raise ConfigError("n must be positive")
    counts = component_counts(w, n) if exact else rng.multinomial(n, w)
    labels = np.repeat(np.arange(1, len(w) + 1), counts)
    labels = labels[rng.permutation(n)]
    d = components[0].dim
    y = np.empty((n, d))
    for k, cp in enumerate(components):
        idx = labels == k + 1
        y[idx] = rskewt(int(idx.sum()), cp, rng)
    return y, labels


def four_cluster_scenario():
    """Two-dimensional skew-t mixture with weights 50/30/15/5 percent.

    Well separated clusters with moderate skew and ``nu = 8``.

    Returns
    -------
    weights : ndarray
    components : list of ClusterParams
    """
    nu = 8.0
    comps = [
        ClusterParams([0.0, 0.0], [2.0, 1.0], SpdMatrix([[1.0, 0.3], [0.3, 0.6]]), nu),
        ClusterParams([10.0, 0.0], [-1.0, 2.0], SpdMatrix([[0.6, -0.2], [-0.2, 1.0]]), nu),
        ClusterParams([0.0, 10.0], [1.5, -1.5], SpdMatrix([[0.8, 0.0], [0.0, 0.8]]), nu),
        ClusterParams([10.0, 10.0], [-1.0, -1.0], SpdMatrix([[0.5, 0.1], [0.1, 0.5]]), nu),
    ]
    return np.array([0.5, 0.3, 0.15, 0.05]), comps
