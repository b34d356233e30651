"""Kernel analog forecasting.

Streaming KAF fits the weights

    W = G phi(U)^T Q (Lambda + mu max(Lambda) I)^{-1} Q^T          (r x s)

where (Q, Lambda) is a rank-l eigendecomposition of the featurized
covariance phi(U) phi(U)^T, so a forecast is ``W @ phi(v)`` and the model
size depends only on (r, s). The training stream is read at most twice:
once for the Nystrom sketch and once for the cross-covariance
C = G phi(U)^T. ``passes=1`` fuses both accumulations into a single loop.

Naive KAF (kernel matrix with truncation and shift) and the linear
least-squares forecaster are included as baselines and test oracles.
"""

import logging
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import ConfigError, DimensionMismatch, EmptyStream, ProblemTooLargeForNaive
from .features import GaussianKernel, featurize, kernel_matrix, rff_new, rmult
from .linalg import TruncatedEig, as_matrix, pseudoinverse, truncated_eig_psd
from .nystrom import NystromConfig, finalize, sketch_basis
from .streams import DEFAULT_BLOCK, iter_blocks, stream_length, stream_rows

log = logging.getLogger(__name__)

NAIVE_MAX_N = 20_000
SKETCH_SEED_DEFAULT = 1
EMPIRICAL_FEATURE_MULTIPLE = 4


def recommended_features(n):
    """ceil(sqrt(n) * ln(n)) random features for n training samples."""
    n = int(n)
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    return math.ceil(math.sqrt(n) * math.log(n))


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for :func:`train_streaming`.

    ``s=None`` picks ``recommended_features(n)`` when the training length is
    known up front and ``4 * ell`` otherwise. ``pca="exact"`` replaces the
    Nystrom sketch by a dense s x s eigendecomposition (small s only).
    """

    q: int
    ell: int
    gamma: float
    s: int = None
    mu: float = 1e-6
    feature_seed: int = 0
    sketch_seed: int = SKETCH_SEED_DEFAULT
    oversample_factor: int = 2
    block: int = DEFAULT_BLOCK
    passes: int = 2
    pca: str = "nystrom"

    def __post_init__(self):
        if self.q < 0:
            raise ConfigError(f"q must be >= 0, got {self.q}")
        if self.ell < 1:
            raise ConfigError(f"ell must be >= 1, got {self.ell}")
        if self.s is not None and self.s < self.ell:
            raise ConfigError(f"need ell <= s, got ell={self.ell}, s={self.s}")
        if not self.gamma > 0:
            raise ConfigError(f"gamma must be positive, got {self.gamma}")
        if not self.mu > 0:
            raise ConfigError(f"mu must be positive, got {self.mu}")
        if self.passes not in (1, 2):
            raise ConfigError(f"passes must be 1 or 2, got {self.passes}")
        if self.pca not in ("nystrom", "exact"):
            raise ConfigError(f"pca must be 'nystrom' or 'exact', got {self.pca!r}")
        if self.block < 1:
            raise ConfigError(f"block must be >= 1, got {self.block}")

    def resolve_s(self, n):
        if self.s is not None:
            return int(self.s)
        if n is not None and n >= 2:
            return recommended_features(n)
        return EMPIRICAL_FEATURE_MULTIPLE * self.ell


@dataclass(frozen=True, eq=False)
class ForecastModel:
    """Compact forecaster: ``W`` (r x s) plus the feature-map metadata."""

    W: np.ndarray
    gamma: float
    d: int
    s: int
    feature_seed: int
    q: int
    ell: int
    mu: float
    training_n: int

    @property
    def r(self):
        return self.W.shape[0]

    @property
    def feature_meta(self):
        return (self.feature_seed, self.gamma, self.d, self.s)

    @cached_property
    def phi(self):
        return rff_new(self.gamma, self.d, self.s, self.feature_seed)

    def forecast(self, Y, block=DEFAULT_BLOCK):
        return forecast(self, Y, block)


class PairedStream:
    """Training pairs (u_i, g_{i+q}) from raw covariate and response sources.

    Both sources are column sources (see :mod:`skaf.streams`) of the same
    raw length, column t holding u(x_t) and g(x_t). Only the last q
    covariates are held back between blocks, so the lag costs O(q d')
    memory. :meth:`pairs` can be called once per pass; sources that cannot
    be reopened (plain generators) only support one pass.
    """

    def __init__(self, covariates, responses, q, block=DEFAULT_BLOCK):
        if q < 0:
            raise ConfigError(f"q must be >= 0, got {q}")
        self.covariates = covariates
        self.responses = responses
        self.q = int(q)
        self.block = int(block)
        self.max_buffer = 0
        self.passes = 0

    @classmethod
    def from_states(cls, states, q, covariate_rows=None, response_rows=None, block=DEFAULT_BLOCK):
        """Pairs taken from row subsets of one in-memory trajectory (d x n)."""
        X = np.asarray(states, dtype=np.float64)
        U = X if covariate_rows is None else X[covariate_rows]
        G = X if response_rows is None else X[response_rows]
        return cls(np.atleast_2d(U), np.atleast_2d(G), q, block)

    @property
    def n_pairs(self):
        n = stream_length(self.covariates)
        return None if n is None else max(n - self.q, 0)

    @property
    def d(self):
        return stream_rows(self.covariates)

    def pairs(self):
        """Yield aligned blocks ``(U_b, G_b)`` of exactly ``block`` pairs (last may be short)."""
        self.passes += 1
        return iter_blocks(self._lagged(), self.block)

    def _lagged(self):
        # rebatching [U; G] jointly keeps covariate and response blocks aligned
        q = self.q
        cov = iter_blocks(self.covariates, self.block)
        res = iter_blocks(self.responses, self.block)
        pending = None
        for Ub in cov:
            Gb = next(res, None)
            if Gb is None or Gb.shape[1] != Ub.shape[1]:
                raise DimensionMismatch("covariate and response streams differ in length")
            C = Ub if pending is None else np.concatenate([pending, Ub], axis=1)
            p = C.shape[1] - Ub.shape[1]
            self.max_buffer = max(self.max_buffer, p)
            # response column j of this block pairs with C column j + p - q
            j0 = max(0, q - p)
            if j0 < Gb.shape[1]:
                U = C[:, j0 + p - q:Gb.shape[1] + p - q]
                yield self._stack(U, Gb[:, j0:])
            pending = C[:, max(0, C.shape[1] - q):] if q else None
        if next(res, None) is not None:
            raise DimensionMismatch("covariate and response streams differ in length")

    def _stack(self, U, G):
        if not hasattr(self, "_split"):
            self._split = U.shape[0]
        elif U.shape[0] != self._split:
            raise DimensionMismatch(f"covariate dimension changed from {self._split} to {U.shape[0]}")
        return np.concatenate([U, G], axis=0)

    def split(self, B):
        return B[:self._split], B[self._split:]


def _iter_pairs(data):
    data.__dict__.pop("_split", None)
    for B in data.pairs():
        yield data.split(B)


def train_streaming(data, cfg):
    """Fit a :class:`ForecastModel` from a :class:`PairedStream`.

    ``cfg.q`` is informational here (the lag lives in ``data``); it is
    checked against ``data.q`` when both are set.
    """
    if isinstance(data, PairedStream) and data.q != cfg.q:
        raise ConfigError(f"stream lag q={data.q} differs from config q={cfg.q}")
    s = cfg.resolve_s(data.n_pairs)
    if cfg.ell > s:
        raise ConfigError(f"ell={cfg.ell} exceeds feature count s={s}")
    t0 = time.perf_counter()
    W, n, phi = _fit(lambda d: rff_new(cfg.gamma, d, s, cfg.feature_seed),
                     lambda: _iter_pairs(data), s, cfg)
    log.info("trained: n=%d s=%d ell=%d gamma=%g passes=%d (%.2fs)",
             n, s, cfg.ell, cfg.gamma, cfg.passes, time.perf_counter() - t0)
    d = phi.d
    model = ForecastModel(W, cfg.gamma, d, s, cfg.feature_seed, cfg.q, cfg.ell, cfg.mu, n)
    model.__dict__["phi"] = phi
    return model


def _fit(make_phi, open_pairs, s, cfg):
    """Return ``(W, n, phi)`` for pair blocks produced by ``open_pairs()``.

    The feature map is built by ``make_phi(d)`` once the first block shows
    the covariate dimension.
    """
    phi = None
    if cfg.pca == "nystrom":
        ncfg = NystromConfig(cfg.ell, cfg.sketch_seed, cfg.oversample_factor)
        Omega = sketch_basis(s, ncfg.sketch_size(s), ncfg.seed)
        Z = np.zeros_like(Omega)
    else:
        Omega = None
        Z = np.zeros((s, s))
    C = None
    n = 0

    def add_cov(V):
        if Omega is None:
            Z[...] += V @ V.T
        else:
            Z[...] += V @ (V.T @ Omega)

    def add_cross(V, G):
        nonlocal C
        if C is None:
            C = np.zeros((G.shape[0], s))
        C += G @ V.T

    def features(U):
        nonlocal phi
        if phi is None:
            phi = make_phi(U.shape[0])
        return featurize(phi, U)

    if cfg.passes == 1:
        for U, G in open_pairs():
            V = features(U)
            add_cov(V)
            add_cross(V, G)
            n += U.shape[1]
    else:
        for U, _ in open_pairs():
            add_cov(features(U))
            n += U.shape[1]
        m = 0
        for U, G in open_pairs():
            add_cross(features(U), G)
            m += U.shape[1]
        if m != n:
            raise DimensionMismatch(f"second pass saw {m} pairs, first pass saw {n}")
    if n == 0:
        raise EmptyStream("training stream yielded no pairs")
    if Omega is None:
        eig = truncated_eig_psd(Z, cfg.ell, overwrite=True)
    else:
        eig, _ = finalize(Omega, Z, cfg.ell)
    return weights_from_eig(C, eig, cfg.mu), n, phi


def weights_from_eig(C, eig, mu):
    """``((C Q) / (Lambda + mu max(Lambda))) Q^T``."""
    lam = eig.lam + mu * float(np.max(eig.lam))
    if not np.all(lam > 0):
        # all-zero spectrum: nothing to regress on
        return np.zeros((C.shape[0], eig.Q.shape[0]))
    return ((C @ eig.Q) / lam) @ eig.Q.T


def forecast(model, Y, block=DEFAULT_BLOCK):
    """Forecasts ``W @ phi(y_j)`` for every column of ``Y`` (r x m)."""
    return rmult(model.phi, Y, model.W, block)


def train_family(covariates, responses, leads, cfg):
    """Independent forecast models for several lead times, sharing one sketch.

    ``covariates`` (d' x N) and ``responses`` (r x N) are raw in-memory
    series. With ``q_max = max(leads)`` every model uses the same
    n = N - q_max covariates u_0..u_{n-1}; the model for lead q regresses
    g_{i+q} on u_i. Because the weights are linear in the responses, one
    training run with all lagged responses stacked as rows gives exactly
    the per-lead models.
    """
    U = as_matrix(covariates, "covariates")
    G = as_matrix(responses, "responses")
    if U.shape[1] != G.shape[1]:
        raise DimensionMismatch(f"covariates have {U.shape[1]} columns, responses {G.shape[1]}")
    leads = [int(q) for q in leads]
    if not leads or min(leads) < 0:
        raise ConfigError("leads must be a nonempty list of nonnegative step counts")
    q_max = max(leads)
    n = U.shape[1] - q_max
    if n < 1:
        raise EmptyStream(f"{U.shape[1]} snapshots cannot cover a lead of {q_max} steps")
    r = G.shape[0]
    stacked = np.concatenate([G[:, q:q + n] for q in leads], axis=0)
    s = cfg.resolve_s(n)
    if cfg.ell > s:
        raise ConfigError(f"ell={cfg.ell} exceeds feature count s={s}")

    def open_pairs():
        for j in range(0, n, cfg.block):
            yield U[:, j:min(j + cfg.block, n)], stacked[:, j:j + cfg.block]

    W, _, phi = _fit(lambda d: rff_new(cfg.gamma, d, s, cfg.feature_seed), open_pairs, s, cfg)
    out = {}
    for i, q in enumerate(leads):
        m = ForecastModel(np.ascontiguousarray(W[i * r:(i + 1) * r]), cfg.gamma, U.shape[0], s,
                          cfg.feature_seed, q, cfg.ell, cfg.mu, n)
        m.__dict__["phi"] = phi
        out[q] = m
    return out


# baselines ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NaiveModel:
    """Kernel-matrix KAF; keeps the training covariates, so size grows with n."""

    U: np.ndarray
    weights: np.ndarray
    gamma: float
    ell: int
    mu: float
    q: int = 0
    eig: TruncatedEig = field(default=None, repr=False)

    @property
    def r(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.U.shape[0]

    def forecast(self, Y, block=DEFAULT_BLOCK):
        k = GaussianKernel(self.gamma)
        out = [self.weights @ kernel_matrix(k, self.U, B)
               for B in iter_blocks(Y, block, self.U.shape[0])]
        if not out:
            return np.zeros((self.r, 0))
        return np.concatenate(out, axis=1)


def train_naive(U, G, ell, gamma, mu=1e-6, q=0, max_n=NAIVE_MAX_N):
    """Naive KAF weights ``G (floor(K + mu~ I)_ell)^+`` with mu~ = mu ||K||_2.

    ``U`` and ``G`` are already lag-aligned (column i of G is the response
    paired with column i of U).
    """
    U = as_matrix(U, "U")
    G = as_matrix(G, "G")
    n = U.shape[1]
    if G.shape[1] != n:
        raise DimensionMismatch(f"U has {n} columns, G has {G.shape[1]}")
    if n == 0:
        raise EmptyStream("no training pairs")
    if n > max_n:
        raise ProblemTooLargeForNaive(n, max_n)
    if not 1 <= ell <= n:
        raise ConfigError(f"ell must satisfy 1 <= ell <= n={n}, got {ell}")
    K = kernel_matrix(GaussianKernel(gamma), U)
    eig = truncated_eig_psd(K, ell, overwrite=True)
    del K
    # for psd K, ||K||_2 is the top eigenvalue; shifting K by mu~ I shifts
    # every eigenvalue and leaves the eigenvectors alone
    shift = mu * float(eig.lam[0])
    lam = eig.lam + shift
    weights = ((G @ eig.Q) / lam) @ eig.Q.T
    return NaiveModel(U, weights, float(gamma), int(ell), float(mu), int(q), eig)


@dataclass(frozen=True, eq=False)
class LinearModel:
    A: np.ndarray
    q: int = 0

    @property
    def r(self):
        return self.A.shape[0]

    @property
    def d(self):
        return self.A.shape[1]

    def forecast(self, Y, block=DEFAULT_BLOCK):
        out = [self.A @ B for B in iter_blocks(Y, block, self.A.shape[1])]
        if not out:
            return np.zeros((self.r, 0))
        return np.concatenate(out, axis=1)


def train_linear(X, X_lag):
    """Least-squares propagator ``A = X_lag X^+``."""
    X = as_matrix(X, "X")
    X_lag = as_matrix(X_lag, "X_lag")
    if X.shape[1] != X_lag.shape[1]:
        raise DimensionMismatch(f"X has {X.shape[1]} columns, X_lag has {X_lag.shape[1]}")
    if X.shape[1] < 1:
        raise EmptyStream("need at least one snapshot")
    return X_lag @ pseudoinverse(X)
