"""Posterior partition summaries and clustering agreement metrics.

Partitions are integer label vectors; only the induced grouping matters, so
every function here is invariant to relabelling. Pairwise quantities are
computed through contingency tables rather than C x C indicator matrices
whenever possible.
"""

import numpy as np

from .exceptions import ConfigError, UndefinedMetricError

SUBSAMPLE_THRESHOLD = 20_000
_TIE_RTOL = 1e-9


def _first_best(scores, minimize):
    """Earliest index whose score ties the optimum up to round-off."""
    scores = np.asarray(scores, dtype=float)
    best = scores.min() if minimize else scores.max()
    tol = _TIE_RTOL * max(1.0, abs(best))
    hit = scores <= best + tol if minimize else scores >= best - tol
    return int(np.argmax(hit))


def canonical_labels(labels):
    """Relabel to ``1..K`` in order of first appearance."""
    labels = np.asarray(labels).ravel()
    if labels.size == 0:
        raise ConfigError("empty partition")
    _, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    order = np.argsort(first, kind="stable")
    rank = np.empty_like(order)
    rank[order] = np.arange(order.size)
    return rank[inv.ravel()] + 1


def _codes(labels):
    _, inv = np.unique(np.asarray(labels).ravel(), return_inverse=True)
    return inv.ravel()


def _check_lengths(partitions):
    parts = [np.asarray(p).ravel() for p in partitions]
    if not parts:
        raise ConfigError("at least one partition is required")
    n = parts[0].shape[0]
    if n == 0:
        raise ConfigError("empty partition")
    if any(p.shape[0] != n for p in parts):
        raise ConfigError("partitions have different lengths")
    return parts


def contingency(a, b):
    """Contingency table ``n_rq`` of two label vectors (rows: ``a``)."""
    ca, cb = _codes(a), _codes(b)
    ka, kb = ca.max() + 1, cb.max() + 1
    return np.bincount(ca * kb + cb, minlength=ka * kb).reshape(ka, kb)


def subsample_indices(n_obs, size, rng):
    """Uniform subsample without replacement, returned sorted."""
    if not 0 < size <= n_obs:
        raise ConfigError("subsample size must lie in 1..n_obs")
    return np.sort(rng.choice(n_obs, size=size, replace=False))


def similarity_matrix(partitions, indices=None):
    """Posterior co-clustering frequencies ``zeta_cd = mean_j 1{l_c = l_d}``.

    Parameters
    ----------
    partitions : sequence of label vectors of equal length C
    indices : array of int, optional
        Restrict to these observations (e.g. from :func:`subsample_indices`).

    Returns
    -------
    ndarray of shape (C, C)
    """
    parts = _check_lengths(partitions)
    if indices is not None:
        parts = [p[indices] for p in parts]
    n = parts[0].shape[0]
    acc = np.zeros((n, n))
    for p in parts:
        codes = _codes(p)
        onehot = np.zeros((n, codes.max() + 1))
        onehot[np.arange(n), codes] = 1.0
        acc += onehot @ onehot.T
    return acc / len(parts)


def binder_losses(partitions, zeta=None):
    """Binder loss ``sum_{c<d} 2 (1{l_c = l_d} - zeta_cd)^2`` of every partition.

    Without ``zeta`` the similarity of ``partitions`` themselves is used and
    the loss is evaluated from contingency tables in ``O(N^2 C)`` time:
    ``A_ii - 2/N sum_j A_ij + 1/N^2 sum_jl A_jl`` with ``A_ij = sum n_ab^2``.
    """
    parts = _check_lengths(partitions)
    if zeta is None:
        m = len(parts)
        a = np.empty((m, m))
        for i in range(m):
            for j in range(i, m):
                t = contingency(parts[i], parts[j])
                a[i, j] = a[j, i] = float(np.sum(t.astype(float) ** 2))
        return np.diag(a) - 2.0 * a.mean(axis=1) + a.mean()
    zeta = np.asarray(zeta, dtype=float)
    n = parts[0].shape[0]
    if zeta.shape != (n, n):
        raise ConfigError("similarity matrix does not match the partition length")
    zz = float(np.sum(zeta * zeta))
    out = np.empty(len(parts))
    for i, p in enumerate(parts):
        codes = _codes(p)
        onehot = np.zeros((n, codes.max() + 1))
        onehot[np.arange(n), codes] = 1.0
        sizes = onehot.sum(axis=0)
        cross = float(np.sum(onehot * (zeta @ onehot)))
        out[i] = float(np.sum(sizes ** 2)) - 2.0 * cross + zz
    return out


def binder_point_estimate(partitions, zeta=None):
    """Sampled partition minimizing the Binder loss; earliest index on ties.

    Returns
    -------
    labels : ndarray
        The chosen partition relabelled to ``1..K``.
    loss : float
    """
    losses = binder_losses(partitions, zeta)
    best = _first_best(losses, minimize=True)
    return canonical_labels(partitions[best]), float(max(losses[best], 0.0))


def f_measure_pair(h, g):
    """F-measure of a predicted cluster ``h`` against a reference cluster ``g``.

    Harmonic mean of precision ``|g & h| / |h|`` and recall ``|g & h| / |g|``.
    """
    h, g = set(h), set(g)
    if not h or not g:
        raise ConfigError("clusters must be non-empty")
    inter = len(h & g)
    if inter == 0:
        return 0.0
    pr = inter / len(h)
    re = inter / len(g)
    return 2.0 * pr * re / (pr + re)


def _f_total_table(table):
    # F(h_r, g_q) = 2 n_rq / (|h_r| + |g_q|)
    table = table.astype(float)
    size_h = table.sum(axis=1)
    size_g = table.sum(axis=0)
    f = 2.0 * table / (size_h[:, None] + size_g[None, :])
    return float(np.sum(size_g * f.max(axis=0)) / size_g.sum())


def f_measure_total(pred, ref):
    """Size-weighted best-match F-measure of ``pred`` against ``ref``.

    ``(1 / sum_q |g_q|) sum_q |g_q| max_r F(h_r, g_q)``. Not symmetric.
    """
    pred, ref = _check_lengths([pred, ref])
    return _f_total_table(contingency(pred, ref))


def f_measure_matrix(partitions):
    """``F[i, j] = f_measure_total(partitions[i], partitions[j])``."""
    parts = _check_lengths(partitions)
    m = len(parts)
    out = np.ones((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            t = contingency(parts[i], parts[j])
            out[i, j] = _f_total_table(t)
            out[j, i] = _f_total_table(t.T)
    return out


def f_point_estimate(partitions):
    """Sampled partition with the largest mean F-measure against the others.

    The score of draw ``i`` is ``mean_{j != i} F_total(l_i, l_j)``; ties go
    to the earliest index.
    """
    if len(partitions) < 2:
        raise ConfigError("at least two partitions are required")
    f = f_measure_matrix(partitions)
    m = f.shape[0]
    score = (f.sum(axis=1) - np.diag(f)) / (m - 1)
    best = _first_best(score, minimize=False)
    return canonical_labels(partitions[best])


def limited_f_measure(pred, ref, p):
    """F-measure restricted to reference clusters with fewer than ``p`` members.

    The predicted clusters touching at least one observation from a small
    reference cluster form ``H``; the reference partition induced on the
    observations covered by ``H`` forms ``G``; the result is
    ``F_total(H, G)``.

    Raises
    ------
    UndefinedMetricError
        If no reference cluster has fewer than ``p`` members.
    """
    pred, ref = _check_lengths([pred, ref])
    if p < 1:
        raise ConfigError("p must be a positive integer")
    ref_codes = _codes(ref)
    ref_sizes = np.bincount(ref_codes)
    small = ref_sizes < p
    if not np.any(small):
        raise UndefinedMetricError(
            f"no reference cluster has fewer than {p} observations "
            f"(smallest has {ref_sizes.min()})")
    pred_codes = _codes(pred)
    touched = np.unique(pred_codes[small[ref_codes]])
    keep = np.isin(pred_codes, touched)
    return _f_total_table(contingency(pred_codes[keep], ref_codes[keep]))
