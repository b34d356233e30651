import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skaf import io
from skaf.errors import ConfigError, DimensionMismatch, EmptyStream, ProblemTooLargeForNaive
from skaf.features import GaussianKernel, featurize, kernel_matrix, rmult
from skaf.kaf import (
    ForecastModel,
    PairedStream,
    TrainConfig,
    forecast,
    recommended_features,
    train_family,
    train_linear,
    train_naive,
    train_streaming,
)


def random_pairs(seed, d=2, r=1, n=120, q=3):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((d, n + q))
    G = np.sin(X[:r]) + 0.1 * X[:r] ** 2
    return PairedStream(X, G, q, block=17)


# recommended_features --------------------------------------------------------

def test_recommended_features_values():
    assert recommended_features(10_000) == 922
    assert recommended_features(4) == 3
    assert recommended_features(10_000) == math.ceil(100 * math.log(10_000))


def test_recommended_features_monotone():
    vals = [recommended_features(n) for n in range(2, 10_001)]
    assert all(b >= a for a, b in zip(vals, vals[1:]))


def test_recommended_features_rejects_small():
    with pytest.raises(ValueError):
        recommended_features(1)


# config ------------------------------------------------------------------------

@pytest.mark.parametrize("kw", [
    dict(q=-1, ell=2, gamma=1.0),
    dict(q=1, ell=0, gamma=1.0),
    dict(q=1, ell=5, gamma=1.0, s=4),
    dict(q=1, ell=2, gamma=0.0),
    dict(q=1, ell=2, gamma=1.0, mu=0.0),
    dict(q=1, ell=2, gamma=1.0, passes=3),
    dict(q=1, ell=2, gamma=1.0, pca="svd"),
])
def test_train_config_validation(kw):
    with pytest.raises(ConfigError):
        TrainConfig(**kw)


def test_default_s_policy():
    cfg = TrainConfig(q=1, ell=10, gamma=1.0)
    assert cfg.resolve_s(10_000) == 922
    assert cfg.resolve_s(None) == 40


# PairedStream --------------------------------------------------------------------

def chunked(X, sizes):
    def gen():
        j = 0
        k = 0
        while j < X.shape[1]:
            w = sizes[k % len(sizes)]
            yield X[:, j:j + w]
            j += w
            k += 1
    return gen


@pytest.mark.parametrize("q", [1, 5, 50])
@pytest.mark.parametrize("block", [1, 7, 64, 1000])
def test_lag_correctness_exhaustive(q, block):
    n_raw = 237
    t = np.arange(n_raw, dtype=float)[None, :]
    ps = PairedStream(chunked(t, [1, 13, 4]), chunked(t + 0.0, [9, 2]), q, block)
    us, gs = [], []
    for B in ps.pairs():
        U, G = B[:1], B[1:]
        us.append(U[0])
        gs.append(G[0])
    u, g = np.concatenate(us), np.concatenate(gs)
    assert u.size == n_raw - q
    assert np.array_equal(u, np.arange(n_raw - q))
    assert np.array_equal(g, u + q)
    assert ps.max_buffer <= q + 1


def test_lag_longer_than_stream():
    t = np.arange(5.0)[None, :]
    ps = PairedStream(t, t, 10, 3)
    assert sum(B.shape[1] for B in ps.pairs()) == 0


def test_paired_stream_length_mismatch():
    ps = PairedStream(np.ones((1, 10)), np.ones((1, 9)), 1, 4)
    with pytest.raises(DimensionMismatch):
        list(ps.pairs())


# streaming training --------------------------------------------------------------

def test_constant_data_reproduces_response():
    u0 = np.array([0.3, -1.2])
    g0 = np.array([2.0, -5.0, 0.5])
    n = 200
    ps = PairedStream(np.repeat(u0[:, None], n, 1), np.repeat(g0[:, None], n, 1), 2)
    m = train_streaming(ps, TrainConfig(q=2, ell=4, gamma=0.5, s=32))
    f = forecast(m, u0)[:, 0]
    assert np.allclose(f, g0, rtol=1e-6)


def test_zero_responses_zero_weights():
    X = np.random.default_rng(0).standard_normal((2, 50))
    m = train_streaming(PairedStream(X, np.zeros((1, 50)), 1), TrainConfig(q=1, ell=3, gamma=1.0, s=12))
    assert not m.W.any()
    assert not forecast(m, X).any()


def test_zero_weights_forecast_zero():
    m = ForecastModel(np.zeros((2, 8)), 1.0, 3, 8, 0, 1, 2, 1e-6, 10)
    assert not forecast(m, np.ones((3, 4))).any()


def test_memorization_single_pair():
    u0 = np.array([1.5])
    m = train_streaming(PairedStream(np.full((1, 30), 1.5), np.full((1, 30), 7.0), 1),
                        TrainConfig(q=1, ell=2, gamma=0.2, s=16))
    assert forecast(m, u0)[0, 0] == pytest.approx(7.0, rel=1e-6)


def test_forecast_equals_rmult():
    ps = random_pairs(1)
    m = train_streaming(ps, TrainConfig(q=3, ell=5, gamma=0.5, s=24))
    Y = np.random.default_rng(2).standard_normal((2, 33))
    assert np.array_equal(forecast(m, Y, 10), rmult(m.phi, Y, m.W, 10))


def test_two_passes_by_default_and_one_pass_fused():
    ps = random_pairs(3)
    m2 = train_streaming(ps, TrainConfig(q=3, ell=5, gamma=0.5, s=24))
    assert ps.passes == 2
    ps1 = random_pairs(3)
    m1 = train_streaming(ps1, TrainConfig(q=3, ell=5, gamma=0.5, s=24, passes=1))
    assert ps1.passes == 1
    assert np.array_equal(m1.W, m2.W)


def test_one_pass_accepts_generators():
    X = np.random.default_rng(4).standard_normal((2, 80))
    G = X[:1] ** 2
    gen_u = (X[:, j:j + 9] for j in range(0, 80, 9))
    gen_g = (G[:, j:j + 9] for j in range(0, 80, 9))
    m = train_streaming(PairedStream(gen_u, gen_g, 2),
                        TrainConfig(q=2, ell=4, gamma=0.5, s=16, passes=1))
    assert m.training_n == 78 and m.d == 2 and m.s == 16


def test_determinism_bit_identical():
    a = train_streaming(random_pairs(5), TrainConfig(q=3, ell=5, gamma=0.5, s=24, feature_seed=9))
    b = train_streaming(random_pairs(5), TrainConfig(q=3, ell=5, gamma=0.5, s=24, feature_seed=9))
    assert np.array_equal(a.W, b.W)
    assert io.model_bytes(a) == io.model_bytes(b)


def test_empty_stream():
    with pytest.raises(EmptyStream):
        train_streaming(PairedStream(np.ones((2, 3)), np.ones((1, 3)), 3),
                        TrainConfig(q=3, ell=2, gamma=1.0, s=8))


def test_dimension_drift():
    items = [np.ones((2, 5)), np.ones((3, 5))]
    with pytest.raises(DimensionMismatch):
        train_streaming(PairedStream(lambda: iter(items), np.ones((1, 10)), 1),
                        TrainConfig(q=1, ell=2, gamma=1.0, s=8))


def test_lag_mismatch_rejected():
    with pytest.raises(ConfigError):
        train_streaming(random_pairs(0, q=2), TrainConfig(q=3, ell=2, gamma=1.0, s=8))


def test_model_size_independent_of_n():
    sizes = []
    for n in (1_000, 10_000):
        X = np.random.default_rng(n).standard_normal((3, n + 1))
        m = train_streaming(PairedStream(X, X[:2], 1), TrainConfig(q=1, ell=8, gamma=0.3, s=40))
        sizes.append(len(io.model_bytes(m)))
    assert sizes[0] == sizes[1]


def gram_path_forecast(V, G, Vy, ell, mu):
    """Forecast through the n x n Gram matrix of the same features."""
    K = V.T @ V
    w, E = np.linalg.eigh(K)
    w, E = w[::-1][:ell], E[:, ::-1][:, :ell]
    lam = w + mu * w[0]
    return ((G @ E) / lam) @ E.T @ (V.T @ Vy)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_weight_identity(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(20, 301))
    s = int(rng.integers(8, 65))
    d = int(rng.integers(1, 4))
    ell = int(rng.integers(1, min(s, n) + 1))
    X = rng.standard_normal((d, n))
    G = np.cos(X[:1]) + X[-1:]
    cfg = TrainConfig(q=0, ell=ell, gamma=0.2, s=s, pca="exact", feature_seed=seed)
    m = train_streaming(PairedStream(X, G, 0), cfg)
    Y = rng.standard_normal((d, 15))
    V, Vy = featurize(m.phi, X), featurize(m.phi, Y)
    # the two routes agree when the ell-th eigenvalue is separated from the next
    lam = np.linalg.eigvalsh(V @ V.T)[::-1]
    if ell < lam.size and lam[ell - 1] - lam[ell] < 1e-6 * lam[0]:
        return
    ref = gram_path_forecast(V, G, Vy, ell, cfg.mu)
    got = forecast(m, Y)
    assert np.linalg.norm(got - ref) <= 1e-6 * max(np.linalg.norm(ref), 1e-12)


def test_ridge_monotone():
    ps_args = dict(seed=7, d=2, r=2, n=300, q=2)
    norms = []
    for mu in (1e-8, 1e-6, 1e-4):
        m = train_streaming(random_pairs(**ps_args), TrainConfig(q=2, ell=20, gamma=0.5, s=48, mu=mu))
        norms.append(np.linalg.norm(m.W))
    assert norms[0] >= norms[1] >= norms[2]


def test_family_matches_independent_models():
    rng = np.random.default_rng(8)
    N, leads = 400, [0, 3, 10]
    X = np.cumsum(rng.standard_normal((2, N)), axis=1) * 0.1
    cfg = TrainConfig(q=0, ell=6, gamma=0.5, s=30, block=37)
    fam = train_family(X, X[:1], leads, cfg)
    n = N - max(leads)
    for q in leads:
        single = train_streaming(PairedStream(X[:, :n + q], X[:1, :n + q], q, 37),
                                 TrainConfig(q=q, ell=6, gamma=0.5, s=30, block=37))
        assert fam[q].q == q and fam[q].training_n == n
        assert np.allclose(fam[q].W, single.W, rtol=1e-10, atol=1e-12 * np.abs(single.W).max())


# naive and linear baselines ----------------------------------------------------

def test_naive_single_point():
    u0, g0 = np.array([[0.5], [1.0]]), np.array([[3.0]])
    mu = 1e-6
    m = train_naive(u0, g0, 1, 0.7, mu)
    assert m.forecast(u0)[0, 0] == pytest.approx(3.0 / (1 + mu), rel=1e-12)


def test_naive_interpolates_in_sample():
    # well-separated nodes keep K comfortably invertible
    U = np.linspace(-3, 3, 10)[None, :]
    G = np.sin(U)
    K = kernel_matrix(GaussianKernel(2.0), U)
    assert np.linalg.eigvalsh(K).min() > 1e-8
    m = train_naive(U, G, 10, 2.0, 1e-12)
    assert np.allclose(m.forecast(U), G, rtol=0.01, atol=0.01 * np.abs(G).max())


def test_naive_guard():
    with pytest.raises(ProblemTooLargeForNaive):
        train_naive(np.ones((1, 11)), np.ones((1, 11)), 2, 1.0, max_n=10)


def test_naive_matches_manual_formula():
    rng = np.random.default_rng(10)
    U, G = rng.standard_normal((2, 40)), rng.standard_normal((1, 40))
    Y = rng.standard_normal((2, 5))
    ell, gamma, mu = 10, 0.3, 1e-3
    K = kernel_matrix(GaussianKernel(gamma), U)
    w, E = np.linalg.eigh(K + mu * np.linalg.norm(K, 2) * np.eye(40))
    E, w = E[:, ::-1][:, :ell], w[::-1][:ell]
    ref = G @ (E / w) @ E.T @ kernel_matrix(GaussianKernel(gamma), U, Y)
    got = train_naive(U, G, ell, gamma, mu).forecast(Y)
    assert np.allclose(got, ref, rtol=1e-8)


def test_linear_identity_dynamics():
    assert np.allclose(train_linear(np.eye(3), np.eye(3)), np.eye(3))


def test_linear_scalar_dynamics():
    X = np.random.default_rng(11).standard_normal((3, 10))
    assert np.allclose(train_linear(X, 2 * X), 2 * np.eye(3))
    Xw = np.random.default_rng(12).standard_normal((3, 2))
    P = Xw @ np.linalg.pinv(Xw)
    assert np.allclose(train_linear(Xw, 2 * Xw), 2 * P)


def test_linear_recovers_generator():
    rng = np.random.default_rng(13)
    M = rng.standard_normal((4, 4))
    X = rng.standard_normal((4, 30))
    assert np.max(np.abs(train_linear(X, M @ X) - M)) <= 1e-8
