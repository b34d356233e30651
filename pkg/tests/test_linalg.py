import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from skaf.errors import (
    DimensionMismatch,
    NonFiniteInput,
    PositiveDefinitenessFailure,
    SingularTriangularFailure,
)
from skaf.linalg import (
    as_matrix,
    cholesky_upper,
    compact_svd,
    pseudoinverse,
    solve_triangular_right,
    truncated_eig_psd,
)

seeds = st.integers(0, 2**32 - 1)


def orth_err(A):
    return np.linalg.norm(A.T @ A - np.eye(A.shape[1]))


# compact_svd ---------------------------------------------------------------

def test_svd_identity():
    svd = compact_svd(np.eye(2))
    assert np.allclose(svd.sigma, [1, 1])
    assert orth_err(svd.U) < 1e-12 and orth_err(svd.V) < 1e-12


def test_svd_rank_deficient_diag():
    svd = compact_svd(np.diag([3.0, 0.0]))
    assert svd.rank == 1
    assert np.allclose(svd.sigma, [3.0])


def test_svd_random_reconstruction():
    M = np.random.default_rng(0).standard_normal((5, 3))
    assert np.max(np.abs(compact_svd(M).reconstruct() - M)) <= 1e-10


def test_svd_zero_matrix_has_rank_zero():
    svd = compact_svd(np.zeros((3, 4)))
    assert svd.rank == 0
    assert svd.U.shape == (3, 0) and svd.V.shape == (4, 0)


def test_svd_rank_cutoff():
    # singular values 1 and 1e-13 -> second is below 1e-12 * sigma_1
    U, _ = np.linalg.qr(np.random.default_rng(1).standard_normal((4, 2)))
    M = U @ np.diag([1.0, 1e-13]) @ U.T
    assert compact_svd(M).rank == 1


def test_rejects_nonfinite():
    with pytest.raises(NonFiniteInput):
        compact_svd(np.array([[1.0, np.nan]]))
    with pytest.raises(DimensionMismatch):
        as_matrix(np.zeros((2, 2, 2)))


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(1, 8))
def test_svd_properties(seed, m, n):
    M = np.random.default_rng(seed).standard_normal((m, n))
    svd = compact_svd(M)
    r = svd.rank
    assert np.linalg.norm(svd.reconstruct() - M) <= 1e-10 * np.linalg.norm(M)
    assert orth_err(svd.U) <= 1e-10 * np.sqrt(r)
    assert orth_err(svd.V) <= 1e-10 * np.sqrt(r)
    assert np.all(np.diff(svd.sigma) <= 0) and np.all(svd.sigma > 0)
    s_all = np.linalg.svd(M, compute_uv=False)
    assert r == np.count_nonzero(s_all > 1e-12 * s_all[0])


# pseudoinverse -------------------------------------------------------------

def test_pinv_diag():
    assert np.allclose(pseudoinverse(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))


def test_pinv_zero():
    P = pseudoinverse(np.zeros((2, 3)))
    assert P.shape == (3, 2) and not P.any()


def test_pinv_penrose_wide():
    M = np.random.default_rng(2).standard_normal((4, 6))
    assert np.max(np.abs(M @ pseudoinverse(M) @ M - M)) <= 1e-8


def test_pinv_rejects_bad_tol():
    with pytest.raises(ValueError):
        pseudoinverse(np.eye(2), rel_tol=1.0)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 7), st.integers(1, 7), st.integers(1, 7))
def test_pinv_penrose_identities(seed, m, n, k):
    rng = np.random.default_rng(seed)
    # random matrix of rank <= k
    M = rng.standard_normal((m, k)) @ rng.standard_normal((k, n))
    P = pseudoinverse(M)
    tol = 1e-8 * max(np.linalg.norm(M, 2), 1.0)
    assert np.linalg.norm(M @ P @ M - M) <= tol
    assert np.linalg.norm(P @ M @ P - P) <= 1e-8 * max(np.linalg.norm(P, 2), 1.0)
    assert np.linalg.norm((M @ P).T - M @ P) <= 1e-8
    assert np.linalg.norm((P @ M).T - P @ M) <= 1e-8


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 6))
def test_pinv_involution_full_rank(seed, n):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((n, n)) + 3 * np.eye(n)
    assert np.linalg.norm(pseudoinverse(pseudoinverse(M)) - M) <= 1e-8 * np.linalg.norm(M)


# cholesky ------------------------------------------------------------------

def test_cholesky_identity():
    assert np.array_equal(cholesky_upper(np.eye(3)), np.eye(3))


def test_cholesky_2x2():
    T = cholesky_upper(np.array([[4.0, 2.0], [2.0, 5.0]]))
    assert np.allclose(T, [[2.0, 1.0], [0.0, 2.0]])


def test_cholesky_singular_gram_fails():
    # G is 4x6, so G^T G is 6x6 with rank 4
    failures = 0
    for seed in range(200):
        G = np.random.default_rng(seed).standard_normal((4, 6))
        with pytest.raises(PositiveDefinitenessFailure) as exc:
            cholesky_upper(G.T @ G)
        assert 0 <= exc.value.pivot < 6
        failures += 1
    assert failures == 200


def test_cholesky_indefinite_reports_pivot():
    with pytest.raises(PositiveDefinitenessFailure) as exc:
        cholesky_upper(np.array([[1.0, 0.0], [0.0, -1.0]]))
    assert exc.value.pivot == 1


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 8))
def test_cholesky_roundtrip(seed, n):
    rng = np.random.default_rng(seed)
    T = np.triu(rng.standard_normal((n, n)))
    T[np.diag_indices(n)] = np.abs(T.diagonal()) + 0.5
    A = T.T @ T
    assert np.linalg.norm(cholesky_upper(A) - T) <= 1e-10 * max(np.linalg.norm(T), 1.0) * n
    T2 = cholesky_upper(A)
    assert np.linalg.norm(T2.T @ T2 - A) <= 1e-10 * np.linalg.norm(A)


# triangular solve ----------------------------------------------------------

def test_solve_identity():
    Z = np.arange(6.0).reshape(2, 3)
    assert np.array_equal(solve_triangular_right(Z, np.eye(3)), Z)


def test_solve_hand():
    S = solve_triangular_right(np.array([[2.0, 3.0]]), np.array([[2.0, 1.0], [0.0, 3.0]]))
    assert np.allclose(S, [[1.0, 2.0 / 3.0]])


def test_solve_singular():
    with pytest.raises(SingularTriangularFailure) as exc:
        solve_triangular_right(np.ones((1, 2)), np.array([[1.0, 1.0], [0.0, 1e-16]]))
    assert exc.value.index == 1


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 8), st.integers(1, 5))
def test_solve_residual(seed, n, m):
    rng = np.random.default_rng(seed)
    T = np.triu(rng.standard_normal((n, n)))
    T[np.diag_indices(n)] = np.sign(T.diagonal() + 1e-3) * (np.abs(T.diagonal()) + 1.0)
    Z = rng.standard_normal((m, n))
    S = solve_triangular_right(Z, T)
    assert np.linalg.norm(S @ T - Z) <= 1e-10 * np.linalg.norm(Z) * n


# truncated eig -------------------------------------------------------------

def test_eig_diag():
    e = truncated_eig_psd(np.diag([5.0, 3.0, 1.0]), 2)
    assert np.allclose(e.lam, [5, 3])
    # Q spans e1, e2
    assert np.allclose(np.abs(e.Q[2]), 0)


def test_eig_identity_any_basis():
    e = truncated_eig_psd(np.eye(4), 4)
    assert np.allclose(e.lam, 1)
    assert orth_err(e.Q) < 1e-12


def test_eig_random_psd_against_full():
    B = np.random.default_rng(3).standard_normal((8, 8))
    A = B @ B.T
    e = truncated_eig_psd(A, 3)
    full = np.sort(np.linalg.eigvalsh(A))[::-1]
    assert np.allclose(e.lam, full[:3], rtol=1e-10)


def test_eig_bad_rank():
    with pytest.raises(ValueError):
        truncated_eig_psd(np.eye(3), 4)


def test_eig_overwrite_keeps_result():
    B = np.random.default_rng(4).standard_normal((10, 10))
    A = B @ B.T
    ref = truncated_eig_psd(A.copy(), 3)
    got = truncated_eig_psd(A, 3, overwrite=True)
    assert np.allclose(got.lam, ref.lam)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(1, 10), st.data())
def test_eig_properties(seed, n, data):
    ell = data.draw(st.integers(1, n))
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, rng.integers(1, n + 1)))
    A = B @ B.T
    e = truncated_eig_psd(A, ell)
    full = np.sort(np.linalg.eigvalsh(A))[::-1]
    assert np.all(e.lam >= 0) and np.all(np.diff(e.lam) <= 0)
    assert orth_err(e.Q) <= 1e-10 * np.sqrt(ell)
    nxt = max(full[ell], 0.0) if ell < n else 0.0
    assert np.linalg.norm(e.reconstruct() - A, 2) <= nxt + 1e-8 * full[0] + 1e-12
    if ell == n:
        assert np.linalg.norm(e.reconstruct() - A) <= 1e-8 * max(np.linalg.norm(A), 1e-300)
