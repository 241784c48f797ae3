"""Symmetric positive-definite matrix with a cached Cholesky factor."""

import numpy as np
from scipy.linalg import solve_triangular

from .exceptions import NotPositiveDefiniteError

_SYMMETRY_RTOL = 1e-10
_MAX_CONDITION = 1e12


class SpdMatrix:
    """Symmetric positive-definite matrix.

    The lower Cholesky factor is computed once at construction and reused
    for every solve, quadratic form and determinant.

    Parameters
    ----------
    values : array_like of shape (d, d)
        Matrix entries. Must be symmetric to 1e-10 relative tolerance.
    max_condition : float, default=1e12
        Matrices with a larger condition number are rejected rather than
        regularized.

    Raises
    ------
    NotPositiveDefiniteError
        If the matrix is not symmetric, not positive definite or too
        badly conditioned.
    """

    __slots__ = ("values", "chol", "dim", "_inv", "_logdet")

    def __init__(self, values, max_condition=_MAX_CONDITION):
        a = np.array(values, dtype=float, copy=True)
        if a.ndim == 0:
            a = a.reshape(1, 1)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise NotPositiveDefiniteError(f"expected a square matrix, got shape {a.shape}")
        if not np.all(np.isfinite(a)):
            raise NotPositiveDefiniteError("matrix has non-finite entries")
        scale = np.max(np.abs(a))
        if np.max(np.abs(a - a.T)) > _SYMMETRY_RTOL * max(scale, 1e-300):
            raise NotPositiveDefiniteError("matrix is not symmetric")
        a = 0.5 * (a + a.T)
        try:
            chol = np.linalg.cholesky(a)
        except np.linalg.LinAlgError:
            raise NotPositiveDefiniteError("matrix is not positive definite") from None
        diag = np.diag(chol)
        if not np.all(diag > 0):
            raise NotPositiveDefiniteError("matrix is not positive definite")
        if a.shape[0] > 1:
            eig = np.linalg.eigvalsh(a)
            if eig[0] <= 0 or eig[-1] / eig[0] > max_condition:
                raise NotPositiveDefiniteError(
                    f"condition number exceeds {max_condition:g}")
        a.flags.writeable = False
        chol.flags.writeable = False
        self.values = a
        self.chol = chol
        self.dim = a.shape[0]
        self._inv = None
        self._logdet = None

    @classmethod
    def identity(cls, dim, scale=1.0):
        return cls(scale * np.eye(dim))

    def __repr__(self):
        return f"SpdMatrix({self.values.tolist()!r})"

    def __eq__(self, other):
        if not isinstance(other, SpdMatrix):
            return NotImplemented
        return np.array_equal(self.values, other.values)

    __hash__ = None

    @property
    def logdet(self):
        if self._logdet is None:
            self._logdet = 2.0 * float(np.sum(np.log(np.diag(self.chol))))
        return self._logdet

    @property
    def inv(self):
        if self._inv is None:
            linv = solve_triangular(self.chol, np.eye(self.dim), lower=True)
            inv = linv.T @ linv
            inv.flags.writeable = False
            self._inv = inv
        return self._inv

    def half_solve(self, x):
        """Return ``L^{-1} x`` for x of shape (d,) or (d, n)."""
        return solve_triangular(self.chol, x, lower=True, check_finite=False)

    def solve(self, x):
        """Return ``A^{-1} x``."""
        z = self.half_solve(x)
        return solve_triangular(self.chol, z, lower=True, trans="T", check_finite=False)

    def quad(self, x):
        """Quadratic form ``x' A^{-1} x``.

        ``x`` may be a single vector of shape (d,) or a stack of row
        vectors of shape (n, d); the latter returns an array of length n.
        """
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            z = self.half_solve(x)
            return float(z @ z)
        z = self.half_solve(x.T)
        return np.einsum("ij,ij->j", z, z)

    def scaled(self, factor):
        return SpdMatrix(self.values * factor)
