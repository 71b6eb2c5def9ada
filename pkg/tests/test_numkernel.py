import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from obsfmm import numkernel as nk
from obsfmm.errors import ArgumentError, ContractError, DefinitenessError

TWO = np.array([[1.0, 0.5], [0.5, 1.0]])


def test_eig_identity():
    e = nk.sym_eig(np.eye(3))
    np.testing.assert_allclose(e.values, [1, 1, 1])


def test_eig_two_by_two():
    e = nk.sym_eig(TWO)
    np.testing.assert_allclose(e.values, [1.5, 0.5], atol=1e-15)
    r = 1 / np.sqrt(2)
    # eigenvectors are defined up to sign
    np.testing.assert_allclose(np.abs(e.vectors), [[r, r], [r, r]], atol=1e-15)
    assert e.vectors[0, 0] * e.vectors[1, 0] > 0
    assert e.vectors[0, 1] * e.vectors[1, 1] < 0


def test_eig_diagonal_sorted():
    np.testing.assert_array_equal(nk.sym_eig(np.diag([4.0, 2.0, 7.0])).values, [7, 4, 2])
    np.testing.assert_array_equal(nk.sym_eigvals(np.diag([4.0, 2.0, 7.0])), [7, 4, 2])


def test_eig_rejects_nonsymmetric():
    with pytest.raises(ContractError):
        nk.sym_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(ContractError):
        nk.sym_eig(np.ones((2, 3)))


def test_svd_diagonal():
    t = nk.truncated_svd(np.diag([3.0, 2.0, 1.0]), 2)
    np.testing.assert_allclose(t.values, [3, 2])
    assert t.rank == 2


def test_svd_rank_one_exact():
    rng = np.random.default_rng(1)
    u = rng.standard_normal(6)
    v = rng.standard_normal(4)
    u /= np.linalg.norm(u)
    v /= np.linalg.norm(v)
    M = np.outer(u, v)
    t = nk.truncated_svd(M, 1)
    np.testing.assert_allclose(t.values, [1.0], rtol=1e-14)
    np.testing.assert_allclose(t.reconstruct(), M, atol=1e-15)


def test_svd_matches_gesvd_oracle():
    M = np.random.default_rng(7).standard_normal((20, 30))
    ref = scipy.linalg.svd(M, compute_uv=False, lapack_driver="gesvd")
    t = nk.truncated_svd(M, 5)
    np.testing.assert_allclose(t.values, ref[:5], rtol=1e-10)
    np.testing.assert_allclose(t.left.T @ t.left, np.eye(5), atol=1e-12)
    np.testing.assert_allclose(t.right.T @ t.right, np.eye(5), atol=1e-12)


def test_svd_sign_convention():
    M = np.random.default_rng(3).standard_normal((8, 5))
    t = nk.truncated_svd(M, 4)
    for k in range(4):
        col = t.right[:, k]
        assert col[np.argmax(np.abs(col))] > 0


@pytest.mark.parametrize("p", [0, 4, -1])
def test_svd_rank_out_of_range(p):
    with pytest.raises(ArgumentError):
        nk.truncated_svd(np.eye(3), p)


def test_invert_cases():
    np.testing.assert_array_equal(nk.spd_invert(np.eye(4)), np.eye(4))
    np.testing.assert_allclose(nk.spd_invert(np.diag([2.0, 4.0])), np.diag([0.5, 0.25]))
    np.testing.assert_allclose(nk.spd_invert(TWO), [[4 / 3, -2 / 3], [-2 / 3, 4 / 3]], rtol=1e-14)


def test_invert_exactly_symmetric():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((30, 30))
    inv = nk.spd_invert(X @ X.T + 30 * np.eye(30))
    assert np.array_equal(inv, inv.T)


def test_invert_not_pd_carries_pivot():
    M = np.diag([1.0, 2.0, -1.0, 4.0])
    with pytest.raises(DefinitenessError) as err:
        nk.spd_invert(M)
    assert err.value.pivot == 3


def test_sample_identity_is_raw_normals():
    a = nk.chol_sample(np.eye(5), np.random.default_rng(11), 3)
    b = np.random.default_rng(11).standard_normal((3, 5))
    np.testing.assert_array_equal(a, b)


def test_sample_variance_monte_carlo():
    x = nk.chol_sample(np.array([[4.0]]), np.random.default_rng(5), 100_000)
    assert abs(x.var() - 4.0) < 0.2


def test_sample_deterministic():
    M = TWO
    a = nk.chol_sample(M, np.random.default_rng(9), 4)
    b = nk.chol_sample(M, np.random.default_rng(9), 4)
    np.testing.assert_array_equal(a, b)


def test_sample_non_pd():
    with pytest.raises(DefinitenessError):
        nk.chol_sample(-np.eye(2), np.random.default_rng(0), 1)


def test_condition_number():
    assert nk.condition_number(np.eye(3)) == 1.0
    assert nk.condition_number(np.diag([8.0, 2.0])) == 4.0
    with pytest.raises(DefinitenessError):
        nk.condition_number(np.diag([1.0, 0.0]))


@st.composite
def spd_matrices(draw, max_n=8):
    n = draw(st.integers(1, max_n))
    seed = draw(st.integers(0, 2**31 - 1))
    X = np.random.default_rng(seed).standard_normal((n, n))
    return X @ X.T + n * np.eye(n)


@settings(max_examples=60, deadline=None)
@given(spd_matrices())
def test_eig_reconstructs(M):
    e = nk.sym_eig(M)
    assert np.all(np.diff(e.values) <= 0)
    np.testing.assert_allclose(e.reconstruct(), M, atol=1e-10 * np.abs(M).max())


@settings(max_examples=60, deadline=None)
@given(spd_matrices())
def test_inverse_residual(M):
    np.testing.assert_allclose(nk.spd_invert(M) @ M, np.eye(M.shape[0]), atol=1e-10)


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**31 - 1))
def test_svd_values_nonincreasing_and_bounded(rows, cols, seed):
    M = np.random.default_rng(seed).standard_normal((rows, cols))
    p = min(rows, cols)
    t = nk.truncated_svd(M, p)
    assert np.all(np.diff(t.values) <= 0)
    assert t.values[0] <= np.linalg.norm(M, "fro") * (1 + 1e-12)
    np.testing.assert_allclose(t.reconstruct(), M, atol=1e-10)
