"""Dense real linear algebra.

Matrices are plain ``float64`` numpy arrays. Data matrices follow the
"snapshots as columns" convention: a d x n array holds n vectors of
length d. The LAPACK routines behind numpy/scipy do the heavy lifting;
this module pins down tolerances, rank decisions and failure modes.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
from scipy.linalg import lapack

from .errors import (
    DimensionMismatch,
    NonFiniteInput,
    PositiveDefinitenessFailure,
    SingularTriangularFailure,
    SVDConvergenceFailure,
)

RANK_RTOL = 1e-12
EPS = np.finfo(np.float64).eps


def as_matrix(a, name="matrix"):
    """Validate and return ``a`` as a finite 2-D float64 array."""
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m.reshape(-1, 1)
    if m.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise NonFiniteInput(f"{name} contains NaN or Inf")
    return m


@dataclass(frozen=True)
class CompactSVD:
    """``M = U @ diag(sigma) @ V.T`` with only the numerically nonzero part kept."""

    U: np.ndarray
    sigma: np.ndarray
    V: np.ndarray

    @property
    def rank(self):
        return self.sigma.shape[0]

    def reconstruct(self):
        return (self.U * self.sigma) @ self.V.T


@dataclass(frozen=True)
class TruncatedEig:
    """Orthonormal ``Q`` (s x l) and nonincreasing nonnegative ``lam``."""

    Q: np.ndarray
    lam: np.ndarray

    @property
    def rank(self):
        return self.lam.shape[0]

    def reconstruct(self):
        return (self.Q * self.lam) @ self.Q.T


def _svd(M):
    try:
        return np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as first:
        # the divide-and-conquer driver occasionally fails where QR iteration succeeds
        try:
            return sla.svd(M, full_matrices=False, lapack_driver="gesvd", check_finite=False)
        except np.linalg.LinAlgError as second:
            raise SVDConvergenceFailure(
                M.shape, f"gesdd: {first}; gesvd: {second}"
            ) from second


def compact_svd(M, rel_tol=RANK_RTOL):
    """Compact SVD of ``M``.

    Singular values at or below ``rel_tol * sigma_1`` are dropped, so the
    returned rank is the numerical rank. A zero matrix gives rank 0.
    """
    M = as_matrix(M)
    if M.size == 0:
        return CompactSVD(
            np.zeros((M.shape[0], 0)), np.zeros(0), np.zeros((M.shape[1], 0))
        )
    U, s, Vt = _svd(M)
    if s.size == 0 or s[0] == 0.0:
        r = 0
    else:
        r = int(np.count_nonzero(s > rel_tol * s[0]))
    return CompactSVD(U[:, :r].copy(), s[:r].copy(), Vt[:r].T.copy())


def pseudoinverse(M, rel_tol=RANK_RTOL):
    """Moore-Penrose pseudoinverse with relative rank cutoff ``rel_tol``."""
    if not 0.0 < rel_tol < 1.0:
        raise ValueError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    svd = compact_svd(M, rel_tol=rel_tol)
    return (svd.V / svd.sigma) @ svd.U.T


def cholesky_upper(A, pivot_rtol=None):
    """Upper-triangular ``T`` with ``T.T @ T = A``.

    Only the upper triangle of ``A`` is read. A pivot ``T[i, i]**2`` that is
    not larger than ``pivot_rtol * max(diag(A))`` counts as non-positive;
    the default ``pivot_rtol`` is ``10 * n * eps``. Rounding can leave a
    tiny positive pivot on an exactly singular matrix, and LAPACK alone
    would accept it.

    Raises
    ------
    PositiveDefinitenessFailure
        With the zero-based pivot index.
    """
    A = as_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"cholesky needs a square matrix, got {A.shape}")
    if n == 0:
        return np.zeros((0, 0))
    T, info = lapack.dpotrf(A, lower=0, clean=1, overwrite_a=0)
    if info > 0:
        raise PositiveDefinitenessFailure(info - 1, float(A[info - 1, info - 1]))
    if info < 0:
        raise ValueError(f"dpotrf rejected argument {-info}")
    if pivot_rtol is None:
        pivot_rtol = 10.0 * n * EPS
    scale = float(np.max(np.diag(A)))
    pivots = np.diag(T) ** 2
    bad = np.flatnonzero(pivots <= pivot_rtol * scale)
    if bad.size:
        raise PositiveDefinitenessFailure(int(bad[0]), float(pivots[bad[0]]))
    return T


def solve_triangular_right(Z, T):
    """Return ``S`` with ``S @ T = Z`` for upper-triangular ``T``."""
    Z = as_matrix(Z, "Z")
    T = as_matrix(T, "T")
    n = T.shape[0]
    if T.shape[1] != n or Z.shape[1] != n:
        raise DimensionMismatch(f"cannot solve S @ T = Z with Z {Z.shape}, T {T.shape}")
    if n == 0:
        return np.zeros_like(Z)
    diag = np.abs(np.diag(T))
    floor = 1e-14 * np.max(np.abs(T))
    bad = np.flatnonzero(diag <= floor)
    if bad.size:
        raise SingularTriangularFailure(int(bad[0]), float(diag[bad[0]]))
    # S T = Z  <=>  T^T S^T = Z^T
    return sla.solve_triangular(T, Z.T, trans="T", lower=False, check_finite=False).T


def truncated_eig_psd(A, ell, overwrite=False):
    """Top-``ell`` eigenpairs of a symmetric psd matrix, largest first.

    Eigenvalues are clamped at zero. When two eigenvalues tie at the
    cut, which eigenvector is kept is up to LAPACK. ``overwrite=True`` lets
    LAPACK destroy ``A`` instead of copying it (large kernel matrices).
    """
    A = as_matrix(A)
    n = A.shape[0]
    if A.shape[1] != n:
        raise DimensionMismatch(f"eig needs a square matrix, got {A.shape}")
    ell = int(ell)
    if not 1 <= ell <= n:
        raise ValueError(f"ell must satisfy 1 <= ell <= {n}, got {ell}")
    if overwrite and A.flags.c_contiguous:
        # A is symmetric, so its transpose is the same matrix in Fortran order
        # and LAPACK can work on it without a copy
        A = A.T
    try:
        if ell < n:
            w, V = sla.eigh(
                A, subset_by_index=[n - ell, n - 1], overwrite_a=overwrite, check_finite=False
            )
        else:
            w, V = sla.eigh(A, overwrite_a=overwrite, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SVDConvergenceFailure(A.shape, str(exc)) from exc
    w = np.maximum(w[::-1], 0.0)
    return TruncatedEig(np.ascontiguousarray(V[:, ::-1]), w)
