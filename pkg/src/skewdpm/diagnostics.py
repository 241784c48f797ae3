"""Convergence diagnostics for scalar MCMC traces."""

import numpy as np

from .exceptions import ConfigError

_MIN_LENGTH = 10


def gelman_rubin(traces):
    """Split-chain potential scale reduction factor.

    Each trace is cut into two halves and the classical between/within
    variance ratio is computed over the ``2 m`` half-chains.

    Parameters
    ----------
    traces : sequence of 1-D arrays
        At least two traces of equal length >= 10.

    Returns
    -------
    float
        ``sqrt(var_plus / W)``. Equals 1 for bit-identical traces (e.g. two
        runs with one seed) and when both the within and between variances
        vanish; ``inf`` when only the within variance does.
    """
    if len(traces) < 2:
        raise ConfigError("at least two traces are required")
    arr = [np.asarray(t, dtype=float).ravel() for t in traces]
    n = arr[0].shape[0]
    if any(a.shape[0] != n for a in arr):
        raise ConfigError("traces must have equal length")
    if n < _MIN_LENGTH:
        raise ConfigError(f"traces must have length >= {_MIN_LENGTH}, got {n}")
    if not all(np.all(np.isfinite(a)) for a in arr):
        raise ConfigError("traces contain non-finite values")
    if all(np.array_equal(a, arr[0]) for a in arr[1:]):
        return 1.0
    half = n // 2
    chains = np.array([piece for a in arr for piece in (a[:half], a[n - half:])])
    means = chains.mean(axis=1)
    within = chains.var(axis=1, ddof=1).mean()
    between = half * means.var(ddof=1)
    if within == 0.0:
        return 1.0 if between == 0.0 else float("inf")
    var_plus = (half - 1) / half * within + between / half
    return float(np.sqrt(var_plus / within))


def iterations_to_convergence(traces, threshold=1.1, step=50, min_length=100):
    """First chain length at which the diagnostic falls below ``threshold``.

    For each candidate length ``n`` on the grid ``min_length, min_length +
    step, ...``, the diagnostic is evaluated on the second half of the first
    ``n`` iterations of every trace (the first half is treated as warm-up).

    Returns
    -------
    int or None
        ``None`` when the threshold is never reached.
    """
    arr = [np.asarray(t, dtype=float).ravel() for t in traces]
    n_max = min(a.shape[0] for a in arr)
    for n in range(min_length, n_max + 1, step):
        start = n // 2
        if n - start < _MIN_LENGTH:
            continue
        if gelman_rubin([a[start:n] for a in arr]) < threshold:
            return n
    return None
