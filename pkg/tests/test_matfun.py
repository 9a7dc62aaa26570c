import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdpool.errors import ConfigurationError, DomainError, PreconditionError, SingularError
from spdpool.linalg import frob_norm, random_spd, sym_eig
from spdpool.matfun import (
    Log,
    NewtonConfig,
    Power,
    Sqrt,
    gauss_jordan_inv,
    log_scaling_squaring,
    mat_fun_spectral,
    parse_matfun,
    sqrt_denman_beavers,
    sqrt_iterative,
    sqrt_newton_schulz,
    sqrt_residual,
)

DB = NewtonConfig(scheme="denman-beavers", scale_mode="none")
NS = NewtonConfig(scheme="newton-schulz")


def rel(X, Y):
    return frob_norm(X - Y) / frob_norm(Y)


def test_kinds_and_parsing():
    assert parse_matfun("sqrt") == Sqrt()
    assert parse_matfun("LOG") == Log()
    assert parse_matfun("power:0.25") == Power(0.25)
    assert parse_matfun("none") is None
    assert parse_matfun(str(Power(0.75))) == Power(0.75)
    for bad in ("power:0", "power:1.5", "power:x", "exp"):
        with pytest.raises(ConfigurationError):
            parse_matfun(bad)
    with pytest.raises(ConfigurationError):
        NewtonConfig(iterations=-1)
    with pytest.raises(ConfigurationError):
        NewtonConfig(scheme="halley")


def test_spectral_examples():
    np.testing.assert_allclose(mat_fun_spectral(np.diag([4.0, 9.0]), Sqrt()), np.diag([2.0, 3.0]), atol=1e-15)
    Z = mat_fun_spectral(np.array([[2.0, 1.0], [1.0, 2.0]]), Sqrt())
    a, b = (np.sqrt(3) + 1) / 2, (np.sqrt(3) - 1) / 2
    np.testing.assert_allclose(Z, [[a, b], [b, a]], rtol=1e-14)
    np.testing.assert_allclose(Z @ Z, [[2, 1], [1, 2]], rtol=1e-14)
    np.testing.assert_array_equal(mat_fun_spectral(np.eye(4), Log()), np.zeros((4, 4)))


def test_power_one_is_exact_identity():
    A = random_spd(7, 100, rng=0)
    np.testing.assert_array_equal(mat_fun_spectral(A, Power(1.0)), A)


@pytest.mark.parametrize("seed", range(5))
def test_spectral_postconditions(seed):
    A = random_spd(12, 1e4, rng=seed)
    s = sym_eig(A).values
    for p in (0.25, 0.5, 0.75):
        np.testing.assert_allclose(sym_eig(mat_fun_spectral(A, Power(p))).values, s**p, rtol=1e-10)
    L = mat_fun_spectral(A, Log())
    np.testing.assert_allclose(np.exp(sym_eig(L).values), s, rtol=1e-10)
    Z = mat_fun_spectral(A, Sqrt())
    assert sqrt_residual(Z, A) <= 1e-8
    c = 3.7
    for p in (0.3, 0.5):
        np.testing.assert_allclose(mat_fun_spectral(c * A, Power(p)), c**p * mat_fun_spectral(A, Power(p)),
                                   rtol=1e-10, atol=1e-10 * frob_norm(A) ** p)


def test_domain_errors():
    with pytest.raises(DomainError, match="epsilon"):
        mat_fun_spectral(np.diag([1.0, 0.0]), Log())
    with pytest.raises(DomainError):
        mat_fun_spectral(np.diag([1.0, -0.5]), Sqrt())
    # roundoff-level negative eigenvalues are clamped, not rejected
    Z = mat_fun_spectral(np.diag([1.0, -1e-14]), Sqrt())
    np.testing.assert_array_equal(Z, np.diag([1.0, 0.0]))


@pytest.mark.parametrize("k", [0, 1, 5])
def test_identity_is_fixed_point(k):
    I = np.eye(3)
    Y, Zinv, _ = sqrt_denman_beavers(I, NewtonConfig(k, "denman-beavers", "none"))
    np.testing.assert_allclose(Y, I, atol=1e-15)
    np.testing.assert_allclose(Zinv, I, atol=1e-15)
    Y, _ = sqrt_newton_schulz(I, NewtonConfig(k, scale_mode="none"))
    np.testing.assert_allclose(Y, I, atol=1e-15)


def test_scaled_newton_schulz_on_identity_converges():
    # the scaled iteration starts from I / sqrt(d), so I is reached only in the limit
    Y, _ = sqrt_newton_schulz(np.eye(3), NewtonConfig(20))
    np.testing.assert_allclose(Y, np.eye(3), atol=1e-12)


def test_zero_iterations_returns_input():
    A = random_spd(6, 10, rng=1)
    np.testing.assert_array_equal(sqrt_newton_schulz(A, NewtonConfig(0))[0], A)
    np.testing.assert_array_equal(sqrt_denman_beavers(A, NewtonConfig(0, "denman-beavers"))[0], A)


def test_diagonal_examples():
    A = np.diag([4.0, 9.0])
    Y, Zinv, trace = sqrt_denman_beavers(A, DB)
    np.testing.assert_allclose(Y, np.diag([2.0, 3.0]), atol=1e-10)
    np.testing.assert_allclose(Zinv, np.diag([0.5, 1 / 3]), atol=1e-10)
    assert len(trace) == 20
    Y, trace = sqrt_newton_schulz(A, NS)
    np.testing.assert_allclose(Y, np.diag([2.0, 3.0]), atol=1e-7)


def test_denman_beavers_random():
    A = random_spd(32, 1e3, rng=5)
    Y, Zinv, trace = sqrt_denman_beavers(A, DB)
    assert trace[-1] <= 1e-10
    np.testing.assert_allclose(Zinv, np.linalg.inv(mat_fun_spectral(A, Sqrt())), rtol=0, atol=1e-8)


@pytest.mark.parametrize("cond", [1e2, 1e4, 1e6])
def test_denman_beavers_ill_conditioned(cond):
    A = random_spd(16, cond, rng=2)
    Y, _, trace = sqrt_denman_beavers(A, DB)
    assert trace[-1] <= 1e-10


def test_denman_beavers_quadratic_convergence():
    A = random_spd(10, 10, rng=4)
    _, _, trace = sqrt_denman_beavers(A, DB)
    for a, b in zip(trace, trace[1:]):
        if a < 1e-2 and b > 1e-13:
            assert b <= 10 * a * a


def test_newton_schulz_precondition():
    with pytest.raises(PreconditionError, match="measured"):
        sqrt_newton_schulz(4 * np.eye(2), NewtonConfig(scale_mode="none"))
    A = np.diag([1.5, 0.7])
    Y, _ = sqrt_newton_schulz(A, NewtonConfig(scale_mode="none"))
    np.testing.assert_allclose(Y, np.sqrt(A), atol=1e-12)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), d=st.integers(2, 24), logcond=st.floats(0, 4))
def test_newton_schulz_monotone(seed, d, logcond):
    A = random_spd(d, 10**logcond, rng=seed)
    _, trace = sqrt_newton_schulz(A, NewtonConfig(15))
    # once at rounding level the residual only fluctuates
    for a, b in zip(trace, trace[1:]):
        assert b <= a or b < 1e-13


@pytest.mark.parametrize("scheme", ["denman-beavers", "newton-schulz"])
@pytest.mark.parametrize("d", [4, 33, 128])
def test_iterative_matches_spectral(scheme, d):
    A = random_spd(d, 1e4, rng=d)
    Y, _ = sqrt_iterative(A, NewtonConfig(20, scheme))
    assert rel(Y, mat_fun_spectral(A, Sqrt())) <= 1e-7


def test_gauss_jordan():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((9, 9))
    np.testing.assert_allclose(gauss_jordan_inv(M) @ M, np.eye(9), atol=1e-12)
    P = np.array([[0.0, 1.0], [1.0, 0.0]])  # needs pivoting
    np.testing.assert_array_equal(gauss_jordan_inv(P), P)
    with pytest.raises(SingularError, match="iteration 3"):
        gauss_jordan_inv(np.ones((3, 3)), iteration=3)


def test_log_examples():
    np.testing.assert_allclose(log_scaling_squaring(np.eye(4)), np.zeros((4, 4)), atol=1e-15)
    L = log_scaling_squaring(np.diag([np.e**2, 1.0]))
    np.testing.assert_allclose(L, np.diag([2.0, 0.0]), atol=1e-6)


@pytest.mark.parametrize("seed", range(4))
def test_log_matches_spectral(seed):
    A = random_spd(16, 1e4, rng=seed)
    assert rel(log_scaling_squaring(A), mat_fun_spectral(A, Log())) <= 1e-6


def test_log_non_contracting():
    with pytest.raises(ConfigurationError, match="increase k"):
        log_scaling_squaring(np.diag([100.0, 1.0]), k=1)
    with pytest.raises(ConfigurationError):
        log_scaling_squaring(np.eye(2), k=-1)
