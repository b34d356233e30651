"""Gaussian RBF kernel and its random Fourier feature approximation.

The feature map sends x in R^d to

    phi(x)_i = sqrt(2/s) * cos(theta_i + z_i . x),    i = 1..s,

with z_i ~ N(0, 2*gamma*I) and theta_i ~ U[0, 2pi), so that
E[phi(x) . phi(y)] = exp(-gamma * |x - y|^2).

Descriptors are generated from the pinned Philox stream (:mod:`skaf.rng`)
in a fixed order: for i = 1..s, the d coordinates of z_i, then theta_i.
A map is therefore fully determined by (seed, gamma, d, s), which is all
that gets serialized.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import ndtri

from . import rng
from .errors import DegenerateSample, DimensionMismatch
from .linalg import as_matrix
from .streams import DEFAULT_BLOCK, iter_blocks


@dataclass(frozen=True)
class GaussianKernel:
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")

    def __call__(self, x, y):
        return kernel_eval(self, x, y)


def kernel_eval(k, x, y):
    """exp(-gamma * |x - y|^2) for two vectors."""
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if x.shape != y.shape:
        raise DimensionMismatch(f"kernel arguments differ in length: {x.size} vs {y.size}")
    diff = x - y
    return float(np.exp(-k.gamma * np.dot(diff, diff)))


def sq_distances(X, Y, out=None):
    """Squared Euclidean distances between columns, n x m, clipped at zero."""
    D = np.matmul(X.T, Y, out=out)
    D *= -2.0
    D += np.einsum("ij,ij->j", X, X)[:, None]
    D += np.einsum("ij,ij->j", Y, Y)[None, :]
    np.maximum(D, 0.0, out=D)
    return D


def kernel_matrix(k, X, Y=None):
    """Kernel matrix ``K[i, j] = k(X[:, i], Y[:, j])``.

    Built in place so that an n x n matrix costs one n x n allocation.
    With ``Y`` omitted the result is exactly symmetric with unit diagonal.
    """
    X = as_matrix(X, "X")
    if Y is None:
        K = sq_distances(X, X)
        _symmetrize_inplace(K)
        np.fill_diagonal(K, 0.0)
    else:
        Y = as_matrix(Y, "Y")
        if X.shape[0] != Y.shape[0]:
            raise DimensionMismatch(f"X has {X.shape[0]} rows, Y has {Y.shape[0]}")
        K = sq_distances(X, Y)
    K *= -k.gamma
    np.exp(K, out=K)
    return K


def _symmetrize_inplace(K, chunk=2048):
    n = K.shape[0]
    for i in range(0, n, chunk):
        for j in range(i, n, chunk):
            a = K[i:i + chunk, j:j + chunk]
            b = K[j:j + chunk, i:i + chunk]
            avg = 0.5 * (a + b.T)
            K[i:i + chunk, j:j + chunk] = avg
            K[j:j + chunk, i:i + chunk] = avg.T
    return K


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Frozen random Fourier feature map for the Gaussian kernel.

    Use :func:`rff_new` to build one; ``z`` (s x d) and ``theta`` (s,) are
    derived from the other fields.
    """

    gamma: float
    d: int
    s: int
    seed: int
    z: np.ndarray = field(repr=False)
    theta: np.ndarray = field(repr=False)

    @property
    def meta(self):
        return (self.seed, self.gamma, self.d, self.s)

    def __call__(self, X):
        return featurize(self, X)


def rff_new(gamma, d, s, seed):
    gamma = float(gamma)
    d, s, seed = int(d), int(s), int(seed)
    if not gamma > 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if d < 1 or s < 1:
        raise ValueError(f"need d >= 1 and s >= 1, got d={d}, s={s}")
    u = rng.uniforms(seed, s * (d + 1)).reshape(s, d + 1)
    z = np.sqrt(2.0 * gamma) * ndtri(u[:, :d])
    theta = 2.0 * np.pi * u[:, d]
    z.setflags(write=False)
    theta.setflags(write=False)
    return FeatureMap(gamma, d, s, seed, z, theta)


def featurize(phi, X):
    """Features of the columns of ``X`` (d x B) as an s x B array."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    if X.shape[0] != phi.d:
        raise DimensionMismatch(f"feature map expects {phi.d} rows, got {X.shape[0]}")
    V = phi.z @ X
    V += phi.theta[:, None]
    np.cos(V, out=V)
    V *= np.sqrt(2.0 / phi.s)
    return V


def _check_rows(M, rows, what):
    M = as_matrix(M, what)
    if M.shape[0] != rows:
        raise DimensionMismatch(f"{what} must have {rows} rows, got {M.shape[0]}")
    return M


def mult_cov(phi, X, M, block=DEFAULT_BLOCK):
    """Stream ``phi(X) @ phi(X).T @ M`` in one pass over ``X``."""
    M = _check_rows(M, phi.s, "M")
    T = np.zeros((phi.s, M.shape[1]))
    for B in iter_blocks(X, block, phi.d):
        V = featurize(phi, B)
        T += V @ (V.T @ M)
    return T


def rmult_adj(phi, X, M, block=DEFAULT_BLOCK):
    """Stream ``M @ phi(X).T``; ``M`` has one column per streamed column."""
    M = as_matrix(M, "M")
    n = M.shape[1]
    T = np.zeros((M.shape[0], phi.s))
    seen = 0
    for B in iter_blocks(X, block, phi.d):
        b = B.shape[1]
        if seen + b > n:
            raise DimensionMismatch(f"stream is longer than the {n} columns of M")
        T += M[:, seen:seen + b] @ featurize(phi, B).T
        seen += b
    if seen != n:
        raise DimensionMismatch(f"stream has {seen} columns but M has {n}")
    return T


def rmult(phi, Y, M, block=DEFAULT_BLOCK):
    """Stream ``M @ phi(Y)``; column j of the result is ``M @ phi(y_j)``."""
    M = as_matrix(M, "M")
    if M.shape[1] != phi.s:
        raise DimensionMismatch(f"M must have {phi.s} columns, got {M.shape[1]}")
    out = [M @ featurize(phi, B) for B in iter_blocks(Y, block, phi.d)]
    if not out:
        return np.zeros((M.shape[0], 0))
    return np.concatenate(out, axis=1)


def median_bandwidth(X_sample, quantile=0.5):
    """Inverse bandwidth 1/delta^2, delta the ``quantile`` of pairwise distances.

    With the default quantile this is the median heuristic. Quantiles are
    computed with numpy's default linear interpolation.
    """
    X = as_matrix(X_sample, "X_sample")
    if X.shape[1] < 2:
        raise DegenerateSample("need at least two points")
    if not 0.0 < quantile < 1.0:
        raise ValueError(f"quantile must lie in (0, 1), got {quantile}")
    dist = pdist(X.T)
    delta = float(np.quantile(dist, quantile))
    if delta == 0.0:
        raise DegenerateSample("quantile of pairwise distances is zero")
    return 1.0 / delta**2
