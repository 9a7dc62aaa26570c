"""Matrix functions of SPD matrices: spectral power/sqrt/log and iterative square roots."""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DomainError, InputError, PreconditionError, SingularError
from .linalg import frob_norm, reconstruct, sym_eig, sym_part

__all__ = [
    "Power",
    "Sqrt",
    "Log",
    "NewtonConfig",
    "parse_matfun",
    "scalar_fn",
    "mat_fun_spectral",
    "sqrt_denman_beavers",
    "sqrt_newton_schulz",
    "sqrt_iterative",
    "log_scaling_squaring",
    "sqrt_residual",
    "gauss_jordan_inv",
]


@dataclass(frozen=True)
class Power:
    p: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ConfigurationError(f"power exponent must lie in (0, 1], got {self.p}")

    def __str__(self):
        return f"power:{self.p!r}"


@dataclass(frozen=True)
class Sqrt:
    def __str__(self):
        return "sqrt"


@dataclass(frozen=True)
class Log:
    def __str__(self):
        return "log"


@dataclass(frozen=True)
class NewtonConfig:
    """Settings for the iterative square root.

    ``scheme`` is ``"denman-beavers"`` or ``"newton-schulz"``; ``scale_mode``
    is ``"frobenius"`` (iterate on ``A / ||A||_F``) or ``"none"``.
    """

    iterations: int = 20
    scheme: str = "newton-schulz"
    scale_mode: str = "frobenius"

    def __post_init__(self):
        if int(self.iterations) != self.iterations or self.iterations < 0:
            raise ConfigurationError(f"iterations must be a non-negative integer, got {self.iterations}")
        if self.scheme not in ("denman-beavers", "newton-schulz"):
            raise ConfigurationError(f"unknown Newton scheme {self.scheme!r}")
        if self.scale_mode not in ("frobenius", "none"):
            raise ConfigurationError(f"unknown scale mode {self.scale_mode!r}")


def parse_matfun(text):
    """Parse ``"none"``, ``"sqrt"``, ``"log"`` or ``"power:<p>"``."""
    text = str(text).strip().lower()
    if text in ("", "none"):
        return None
    if text == "sqrt":
        return Sqrt()
    if text == "log":
        return Log()
    if text.startswith("power:"):
        try:
            p = float(text.split(":", 1)[1])
        except ValueError as exc:
            raise ConfigurationError(f"bad power exponent in {text!r}") from exc
        return Power(p)
    raise ConfigurationError(f"unknown matrix function {text!r}")


def scalar_fn(kind):
    """Return ``(g, g_prime)`` acting elementwise on eigenvalues."""
    if isinstance(kind, Sqrt):
        return np.sqrt, lambda s: 0.5 / np.sqrt(s)
    if isinstance(kind, Log):
        return np.log, lambda s: 1.0 / s
    if isinstance(kind, Power):
        p = kind.p
        return (lambda s: s**p), (lambda s: p * s ** (p - 1.0))
    raise InputError(f"not a matrix function kind: {kind!r}")


def _admissible_spectrum(eig, kind):
    s = eig.values
    smax = max(abs(float(s[0])), np.finfo(s.dtype).tiny)
    if isinstance(kind, Log):
        if not s[-1] > 0:
            raise DomainError(
                f"matrix logarithm needs a positive definite matrix; smallest eigenvalue "
                f"is {float(s[-1]):.3e}. Increase the diagonal shift epsilon."
            )
        return s
    # roundoff can push eigenvalues of a PSD matrix slightly below zero
    if s[-1] < -1e-10 * smax:
        raise DomainError(
            f"matrix power needs a positive semidefinite matrix; smallest eigenvalue "
            f"is {float(s[-1]):.3e}"
        )
    return np.maximum(s, 0)


def mat_fun_spectral(A, kind, eig=None):
    """``U g(S) U^T`` for ``A = U S U^T``.

    ``Power(1)`` returns a copy of ``A`` without decomposing it, so the
    identity normalization is exact.
    """
    A = np.asarray(A)
    if isinstance(kind, Power) and kind.p == 1.0:
        return sym_part(A).copy()
    if eig is None:
        eig = sym_eig(A)
    s = _admissible_spectrum(eig, kind)
    g, _ = scalar_fn(kind)
    return reconstruct(eig, g(s))


def sqrt_residual(Y, A):
    """``||Y Y - A||_F / ||A||_F``."""
    return frob_norm(Y @ Y - A) / frob_norm(A)


def gauss_jordan_inv(M, iteration=None):
    """Inverse by Gauss-Jordan elimination with partial pivoting."""
    M = np.asarray(M)
    n = M.shape[0]
    aug = np.concatenate([M.astype(M.dtype, copy=True), np.eye(n, dtype=M.dtype)], axis=1)
    tol = n * np.finfo(M.dtype).eps * max(np.abs(M).max(), np.finfo(M.dtype).tiny)
    for col in range(n):
        piv = col + int(np.argmax(np.abs(aug[col:, col])))
        if abs(aug[piv, col]) <= tol:
            where = "" if iteration is None else f" at iteration {iteration}"
            raise SingularError(f"singular matrix in Gauss-Jordan inverse{where} (pivot column {col})")
        if piv != col:
            aug[[col, piv]] = aug[[piv, col]]
        aug[col] /= aug[col, col]
        factors = aug[:, col].copy()
        factors[col] = 0.0
        aug -= np.outer(factors, aug[col])
    return aug[:, n:]


def _scale(A, cfg):
    if cfg.scale_mode == "frobenius":
        nrm = frob_norm(A)
        if nrm == 0.0:
            raise DomainError("cannot scale the zero matrix")
        return 1.0 / nrm
    return 1.0


def sqrt_denman_beavers(A, cfg=NewtonConfig(scheme="denman-beavers", scale_mode="none")):
    """Coupled Denman-Beavers iteration ``Y -> A^(1/2)``, ``Z -> A^(-1/2)``.

    Starts from ``Y0 = alpha A``, ``Z0 = I`` and performs exactly
    ``cfg.iterations`` steps. Returns ``(Y, Zinv, trace)`` where ``trace`` holds
    the relative residual of ``Y`` after each step. ``Zinv`` is the
    approximation of ``A^(-1/2)`` and ``iterations = 0`` returns ``(A, I, [])``.
    """
    A = sym_part(np.asarray(A))
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    if cfg.iterations == 0:
        return A.copy(), I, []
    alpha = _scale(A, cfg)
    Y = alpha * A
    Z = I.copy()
    unscale = 1.0 / np.sqrt(alpha)
    trace = []
    for k in range(cfg.iterations):
        Yinv = gauss_jordan_inv(Y, iteration=k)
        Zinv = gauss_jordan_inv(Z, iteration=k)
        Y, Z = 0.5 * (Y + Zinv), 0.5 * (Z + Yinv)
        Y = sym_part(Y)
        Z = sym_part(Z)
        trace.append(sqrt_residual(Y * unscale, A))
    return Y * unscale, Z * np.sqrt(alpha), trace


def sqrt_newton_schulz(A, cfg=NewtonConfig()):
    """Inverse-free coupled Newton-Schulz iteration for ``A^(1/2)``.

    ``Y <- Y T``, ``Z <- T Z`` with ``T = (3I - Z Y) / 2``. Only locally
    convergent: with ``scale_mode="frobenius"`` the iteration runs on
    ``A / ||A||_F`` and the result is multiplied back by ``||A||_F^(1/2)``.
    """
    A = sym_part(np.asarray(A))
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    if cfg.iterations == 0:
        return A.copy(), []
    alpha = _scale(A, cfg)
    if cfg.scale_mode == "none":
        gap = float(np.max(np.abs(sym_eig(A - I).values)))
        if gap >= 1.0:
            raise PreconditionError(
                f"Newton-Schulz without scaling needs ||A - I||_2 < 1, measured {gap:.4g}"
            )
    Y = alpha * A
    Z = I.copy()
    unscale = 1.0 / np.sqrt(alpha)
    trace = []
    for _ in range(cfg.iterations):
        T = 0.5 * (3.0 * I - Z @ Y)
        Y, Z = Y @ T, T @ Z
        trace.append(sqrt_residual(sym_part(Y) * unscale, A))
    return sym_part(Y) * unscale, trace


def sqrt_iterative(A, cfg):
    """Dispatch on ``cfg.scheme``; returns ``(Y, trace)``."""
    if cfg.scheme == "denman-beavers":
        Y, _, trace = sqrt_denman_beavers(A, cfg)
        return Y, trace
    return sqrt_newton_schulz(A, cfg)


def log_scaling_squaring(A, k=0, taylor_terms=20, sqrt_iterations=20):
    """Matrix logarithm via ``log(A) = 2^k log(A^(1/2^k))``.

    Square roots are taken with Denman-Beavers. With ``k = 0`` square roots are
    taken until ``||X - I||_F < 0.5``; the remaining logarithm is a truncated
    Taylor series in ``X - I``.
    """
    A = sym_part(np.asarray(A))
    n = A.shape[0]
    I = np.eye(n, dtype=A.dtype)
    if int(k) != k or k < 0:
        raise ConfigurationError(f"k must be a non-negative integer, got {k}")
    db = NewtonConfig(iterations=sqrt_iterations, scheme="denman-beavers", scale_mode="frobenius")
    X = A
    steps = 0
    if k == 0:
        while frob_norm(X - I) >= 0.5:
            if steps >= 64:
                raise ConfigurationError("no convergence to the identity after 64 square roots")
            X, _, _ = sqrt_denman_beavers(X, db)
            steps += 1
    else:
        for _ in range(k):
            X, _, _ = sqrt_denman_beavers(X, db)
        steps = k
    E = X - I
    radius = frob_norm(E)
    if radius >= 1.0:
        raise ConfigurationError(
            f"Taylor series for log does not contract: ||A^(1/2^{steps}) - I||_F = {radius:.4g}; "
            "increase k or pass k=0 for automatic selection"
        )
    # Horner form of sum_{m=1}^{M} (-1)^(m+1) E^m / m
    acc = ((-1) ** (taylor_terms + 1) / taylor_terms) * I
    for m in range(taylor_terms - 1, 0, -1):
        acc = ((-1) ** (m + 1) / m) * I + E @ acc
    return sym_part((2.0**steps) * (E @ acc))

