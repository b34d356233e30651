"""Single-pass randomized Nystrom approximation of a featurized covariance.

For C = phi(X) phi(X)^T (s x s, never formed) the sketch Z = C @ Omega is
accumulated in one pass over X, with Omega an orthonormalized s x (p*l)
Gaussian test matrix (p = oversampling factor, default 2). The
eigendecomposition is then recovered from the shifted sketch:

    nu = u * |Z|_F            (u = 2**-53, unit roundoff)
    Z <- Z + nu * Omega
    T = chol(Omega^T Z)       (upper)
    S = Z T^{-1}
    S = U Sigma V^T           (compact SVD)
    lambda = max(0, Sigma^2 - nu), truncated to l terms

The product B (Omega^T B)^+ B^T is never formed. If the Cholesky step hits
a non-positive pivot, the shift is multiplied by 100 and the
factorization retried, at most three times.
"""

import logging
from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import ConfigError, NystromFailure, PositiveDefinitenessFailure, ZeroSpectrum
from .features import mult_cov
from .linalg import TruncatedEig, cholesky_upper, compact_svd, solve_triangular_right
from .streams import DEFAULT_BLOCK

log = logging.getLogger(__name__)

UNIT_ROUNDOFF = 2.0**-53
SHIFT_GROWTH = 100.0
MAX_RETRIES = 3


@dataclass(frozen=True)
class NystromConfig:
    ell: int
    seed: int = 0
    oversample_factor: int = 2

    def __post_init__(self):
        if self.ell < 1:
            raise ConfigError(f"ell must be >= 1, got {self.ell}")
        if self.oversample_factor < 2:
            raise ConfigError(
                f"oversample_factor must be at least 2 (got {self.oversample_factor}); "
                "a sketch with only l columns is unreliable"
            )

    def sketch_size(self, s):
        k = self.oversample_factor * self.ell
        if k > s:
            raise ConfigError(
                f"sketch of {k} columns (={self.oversample_factor}*ell) exceeds feature count s={s}"
            )
        return k


def sketch_basis(s, k, seed):
    """Orthonormal basis (s x k) for the range of a standard normal s x k matrix.

    Entries are drawn column by column from the seed's normal stream.
    Plain Householder QR, no pivoting.
    """
    G = rng.normals(seed, s * k).reshape(k, s).T
    Q, _ = np.linalg.qr(G)
    return Q


def finalize(Omega, Z, ell):
    """Turn a sketch ``Z = C @ Omega`` into a rank-``ell`` eigendecomposition.

    Returns ``(TruncatedEig, nu)`` where ``nu`` is the shift that was used.
    """
    s, k = Omega.shape
    normZ = float(np.linalg.norm(Z))
    if normZ == 0.0:
        return TruncatedEig(Omega[:, :ell].copy(), np.zeros(ell)), 0.0
    nu = UNIT_ROUNDOFF * normZ
    shifts = []
    for attempt in range(MAX_RETRIES + 1):
        shifts.append(nu)
        Zs = Z + nu * Omega
        try:
            T = cholesky_upper(Omega.T @ Zs)
        except PositiveDefinitenessFailure as exc:
            log.debug("nystrom cholesky failed at pivot %d with shift %.3e", exc.pivot, nu)
            if attempt == MAX_RETRIES:
                raise NystromFailure(shifts, exc.pivot) from exc
            nu *= SHIFT_GROWTH
            continue
        break
    S = solve_triangular_right(Zs, T)
    svd = compact_svd(S)
    r = svd.rank
    Q = svd.U
    lam = np.maximum(0.0, svd.sigma**2 - nu)
    if r < ell:
        # S lost rank; pad with directions orthogonal to the kept ones
        extra = np.linalg.qr(np.concatenate([Q, Omega], axis=1))[0][:, r:ell]
        Q = np.concatenate([Q, extra], axis=1)
        lam = np.concatenate([lam, np.zeros(ell - r)])
    return TruncatedEig(np.ascontiguousarray(Q[:, :ell]), lam[:ell].copy()), nu


def feat_nystrom(phi, X, cfg, block=DEFAULT_BLOCK):
    """Rank-``cfg.ell`` Nystrom eigendecomposition of phi(X) phi(X)^T.

    ``X`` is consumed exactly once.
    """
    k = cfg.sketch_size(phi.s)
    Omega = sketch_basis(phi.s, k, cfg.seed)
    Z = mult_cov(phi, X, Omega, block)
    eig, _ = finalize(Omega, Z, cfg.ell)
    return eig


def choose_rank(lambda_full, energy=0.999):
    """Smallest k whose leading eigenvalues hold ``energy`` of the total."""
    lam = np.asarray(lambda_full, dtype=np.float64).reshape(-1)
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy must lie in (0, 1], got {energy}")
    if lam.size == 0 or not np.any(lam > 0):
        raise ZeroSpectrum("spectrum is empty or identically zero")
    if np.any(lam < 0):
        raise ValueError("eigenvalues must be nonnegative")
    csum = np.cumsum(lam)
    target = energy * csum[-1]
    k = int(np.searchsorted(csum, target, side="left")) + 1
    return min(k, lam.size)
