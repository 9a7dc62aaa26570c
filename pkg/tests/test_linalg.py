import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdpool.errors import InputError, SingularError
from spdpool.linalg import (
    frob_norm,
    lyap_solve_kron,
    lyap_solve_sym,
    mat_mul,
    random_spd,
    reconstruct,
    spectrum,
    sym_eig,
    sym_part,
)


def random_sym(d, rng):
    return sym_part(rng.standard_normal((d, d)))


def test_small_helpers():
    assert frob_norm(np.eye(4)) == 2.0
    np.testing.assert_array_equal(sym_part(np.array([[0.0, 2.0], [0.0, 0.0]])), [[0, 1], [1, 0]])
    np.testing.assert_array_equal(mat_mul(np.diag([2.0, 3.0]), np.diag([5.0, 7.0])), np.diag([10.0, 21.0]))
    with pytest.raises(InputError):
        mat_mul(np.eye(2), np.eye(3))
    with pytest.raises(InputError):
        sym_part(np.ones((2, 3)))


@pytest.mark.parametrize("method", ["lapack", "ql"])
def test_eig_diagonal(method):
    e = sym_eig(np.diag([4.0, 9.0]), method=method)
    np.testing.assert_allclose(e.values, [9.0, 4.0])
    np.testing.assert_allclose(np.abs(e.vectors), [[0, 1], [1, 0]], atol=1e-15)


@pytest.mark.parametrize("method", ["lapack", "ql"])
def test_eig_two_by_two(method):
    e = sym_eig(np.array([[2.0, 1.0], [1.0, 2.0]]), method=method)
    np.testing.assert_allclose(e.values, [3.0, 1.0], rtol=1e-14)
    r = 1 / np.sqrt(2)
    np.testing.assert_allclose(e.vectors, [[r, r], [r, -r]], atol=1e-14)


def test_eig_identity_reconstructs():
    e = sym_eig(np.eye(5))
    np.testing.assert_allclose(e.values, np.ones(5))
    np.testing.assert_allclose(reconstruct(e), np.eye(5), atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "ql"])
@pytest.mark.parametrize("d", [2, 3, 7, 16, 33, 64])
def test_eig_roundtrip(method, d):
    rng = np.random.default_rng(d)
    A = random_sym(d, rng)
    e = sym_eig(A, method=method)
    assert np.all(np.diff(e.values) <= 0)
    assert frob_norm(e.vectors.T @ e.vectors - np.eye(d)) <= 1e-10 * d
    assert frob_norm(reconstruct(e) - A) <= 1e-10 * frob_norm(A)


def test_native_and_lapack_agree():
    A = random_spd(20, 1e3, rng=3)
    a, b = sym_eig(A), sym_eig(A, method="ql")
    np.testing.assert_allclose(a.values, b.values, rtol=1e-12)
    # well-separated spectrum: the sign convention pins the vectors down
    np.testing.assert_allclose(a.vectors, b.vectors, atol=1e-9)


def test_sign_convention_and_determinism():
    A = random_spd(10, 50, rng=1)
    e1, e2 = sym_eig(A), sym_eig(A.copy())
    np.testing.assert_array_equal(e1.vectors, e2.vectors)
    U = e1.vectors
    peak = np.argmax(np.abs(U), axis=0)
    assert np.all(U[peak, np.arange(10)] > 0)


def test_eig_rejects_bad_input():
    with pytest.raises(InputError):
        sym_eig(np.array([[1.0, np.nan], [np.nan, 1.0]]))
    with pytest.raises(InputError):
        sym_eig(np.ones((2, 3)))
    with pytest.raises(InputError):
        sym_eig(np.eye(2), method="jacobi")


def test_lyap_examples():
    rng = np.random.default_rng(0)
    B = random_sym(4, rng)
    np.testing.assert_allclose(lyap_solve_sym(2 * np.eye(4), B), B / 4, rtol=1e-14)
    X = lyap_solve_sym(np.diag([1.0, 2.0]), np.array([[2.0, 3.0], [3.0, 8.0]]))
    np.testing.assert_allclose(X, [[1, 1], [1, 2]], rtol=1e-14)


@pytest.mark.parametrize("seed", range(10))
def test_lyap_residual_and_bound(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 17))
    S = random_spd(d, 1e3, rng=rng)
    B = random_sym(d, rng)
    X = lyap_solve_sym(S, B)
    np.testing.assert_array_equal(X, X.T)
    assert frob_norm(S @ X + X @ S - B) <= 1e-9 * frob_norm(B)
    smin = sym_eig(S).values[-1]
    assert frob_norm(X) <= frob_norm(B) / (2 * smin) * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_lyap_matches_kronecker(seed):
    rng = np.random.default_rng(100 + seed)
    d = int(rng.integers(1, 7))
    S = random_spd(d, 100, rng=rng)
    B = random_sym(d, rng)
    np.testing.assert_allclose(lyap_solve_sym(S, B), lyap_solve_kron(S, B), atol=1e-8, rtol=0)


def test_lyap_singular():
    with pytest.raises(SingularError, match="epsilon"):
        lyap_solve_sym(np.diag([1.0, 0.0]), np.eye(2))
    with pytest.raises(InputError):
        lyap_solve_sym(np.eye(2), np.eye(3))


def test_spectrum_profiles():
    s = spectrum(5, 100, "clustered", scale=10.0, gap=1e-9)
    assert s.size == 5 and s[0] - s[1] == pytest.approx(1e-9, rel=1e-3)
    np.testing.assert_allclose(spectrum(4, 1000)[[0, -1]], [10.0, 0.01])
    np.testing.assert_array_equal(spectrum(3, 10, "degenerate"), [10.0] * 3)
    with pytest.raises(InputError):
        spectrum(3, 10, "flat")


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 24), seed=st.integers(0, 2**32 - 1), logcond=st.floats(0, 6))
def test_random_spd_has_requested_spectrum(d, seed, logcond):
    A = random_spd(d, 10**logcond, rng=seed)
    np.testing.assert_array_equal(A, A.T)
    np.testing.assert_allclose(sym_eig(A).values, spectrum(d, 10**logcond), rtol=1e-8, atol=1e-12)
