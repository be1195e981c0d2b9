"""Dense matrix kernels: thin SVD, truncation, pseudoinverse, guarded solves.

All routines work in float64 and return new arrays. Singular vectors follow a
fixed sign convention (largest-magnitude entry of each left vector positive) so
that bases built from the same data are bit-identical across runs.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DegeneracyError, DimensionError, NonFiniteError, RankError

#: condition-number ceiling for :func:`solve_linear`
COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class SvdResult:
    """Thin SVD ``m = left @ diag(singular_values) @ right.T``."""

    left: np.ndarray
    singular_values: np.ndarray
    right: np.ndarray

    @property
    def rank_bound(self):
        return self.singular_values.shape[0]

    def reconstruct(self):
        return (self.left * self.singular_values) @ self.right.T


def as_matrix(m, name="matrix"):
    a = np.asarray(m, dtype=np.float64)
    if a.ndim == 1:
        a = a[:, None]
    if a.ndim != 2 or a.size == 0:
        raise DimensionError(f"{name} must be a nonempty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        bad = np.argwhere(~np.isfinite(a))[0]
        raise NonFiniteError(f"{name} has a non-finite entry at index {tuple(bad)}")
    return a


def svd(m):
    """Thin singular value decomposition with deterministic signs.

    Parameters
    ----------
    m : array_like, shape (r, c)
        Finite, nonempty matrix.

    Returns
    -------
    SvdResult
        ``left`` is r x q, ``right`` is c x q with q = min(r, c); singular
        values are nonincreasing.
    """
    a = as_matrix(m)
    u, s, vt = np.linalg.svd(a, full_matrices=False)
    pivot = np.argmax(np.abs(u), axis=0)
    signs = np.sign(u[pivot, np.arange(u.shape[1])])
    signs[signs == 0] = 1.0
    return SvdResult(u * signs, s, vt.T * signs)


def truncate_svd(s, k):
    """Keep the leading ``k`` singular triplets of ``s``."""
    if not 1 <= k <= s.rank_bound:
        raise RankError(f"k={k} outside [1, {s.rank_bound}]")
    return SvdResult(s.left[:, :k].copy(), s.singular_values[:k].copy(), s.right[:, :k].copy())


def tail_norm(singular_values, k):
    """Frobenius error of the best rank-k approximation."""
    return float(np.sqrt(np.sum(np.asarray(singular_values)[k:] ** 2)))


def numerical_rank(singular_values, shape):
    s = np.asarray(singular_values)
    if s.size == 0 or s[0] == 0:
        return 0
    tol = max(shape) * np.finfo(np.float64).eps * s[0]
    return int(np.sum(s > tol))


def pseudo_inverse(m):
    """Moore-Penrose pseudoinverse via the thin SVD.

    Singular values below ``max(shape) * eps * sigma_1`` are treated as zero,
    matching the usual LAPACK-style cutoff.
    """
    a = as_matrix(m)
    res = svd(a)
    s = res.singular_values
    r = numerical_rank(s, a.shape)
    if r == 0:
        return np.zeros((a.shape[1], a.shape[0]))
    return (res.right[:, :r] / s[:r]) @ res.left[:, :r].T


def condition_number(a):
    s = np.linalg.svd(a, compute_uv=False)
    if s[-1] == 0:
        return np.inf
    return float(s[0] / s[-1])


def solve_linear(a, b):
    """Solve ``a @ x = b`` for square ``a``.

    Raises :class:`DegeneracyError` when the 2-norm condition number of ``a``
    exceeds ``COND_LIMIT``; in a DEIM context this means the selected
    interpolation points cannot determine the basis coefficients.
    """
    a = as_matrix(a, "a")
    b_arr = np.asarray(b, dtype=np.float64)
    vector_rhs = b_arr.ndim == 1
    b2 = as_matrix(b_arr, "b")
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"a must be square, got {a.shape}")
    if b2.shape[0] != a.shape[0]:
        raise DimensionError(f"b has {b2.shape[0]} rows, a has {a.shape[0]}")
    cond = condition_number(a)
    if not cond <= COND_LIMIT:
        raise DegeneracyError(
            f"DEIM degeneracy: interpolation matrix is singular or ill-conditioned "
            f"(condition estimate {cond:.3e} > {COND_LIMIT:.0e})"
        )
    x = np.linalg.solve(a, b2)
    return x[:, 0] if vector_rhs else x
