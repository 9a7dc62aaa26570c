"""Backward passes for the matrix-function layer and a finite-difference oracle.

All gradients use the full-matrix convention on the symmetric subspace: the
returned ``G`` is symmetric and ``dL = sum(G * dA)`` for symmetric ``dA``.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError
from .linalg import lyap_solve_sym, sym_eig, sym_part
from .matfun import Power, Sqrt, mat_fun_spectral, parse_matfun, scalar_fn

__all__ = [
    "SvdTruncated",
    "Lyapunov",
    "PassThrough",
    "parse_grad_scheme",
    "SvdGradWorkspace",
    "svd_grad_workspace",
    "grad_svd",
    "grad_lyapunov",
    "grad_pass_through",
    "finite_diff_grad",
    "GradReport",
    "compare_grads",
    "probe_weights",
    "grad_check",
    "analytic_grad",
    "DEFAULT_TAU",
]

DEFAULT_TAU = 1e-10


@dataclass(frozen=True)
class SvdTruncated:
    tau: float = DEFAULT_TAU

    def __post_init__(self):
        if not self.tau > 0:
            raise ConfigurationError(f"truncation threshold must be positive, got {self.tau}")

    def __str__(self):
        return f"svd:{self.tau!r}"


@dataclass(frozen=True)
class Lyapunov:
    def __str__(self):
        return "lyapunov"


@dataclass(frozen=True)
class PassThrough:
    def __str__(self):
        return "pass-through"


def parse_grad_scheme(text):
    """Parse ``"lyapunov"``, ``"pass-through"``, ``"svd"`` or ``"svd:<tau>"``."""
    text = str(text).strip().lower()
    if text in ("lyapunov", "lyap"):
        return Lyapunov()
    if text in ("pass-through", "passthrough", "faster"):
        return PassThrough()
    if text == "svd":
        return SvdTruncated()
    if text.startswith("svd:"):
        try:
            return SvdTruncated(float(text.split(":", 1)[1]))
        except ValueError as exc:
            raise ConfigurationError(f"bad truncation threshold in {text!r}") from exc
    raise ConfigurationError(f"unknown gradient scheme {text!r}")


@dataclass
class SvdGradWorkspace:
    """Quantities shared by the spectral gradient.

    ``K[i, j] = 1 / (s_i - s_j)`` off the diagonal, zeroed for truncated
    indices and for pairs closer than ``tau * s_max``.
    """

    eig: object
    K: np.ndarray
    g: np.ndarray
    gprime: np.ndarray
    active: np.ndarray


def svd_grad_workspace(eig, kind, tau=DEFAULT_TAU):
    s = eig.values
    smax = float(s[0])
    thresh = tau * smax
    active = s > thresh
    g_fn, gp_fn = scalar_fn(kind)
    safe = np.where(active, s, 1.0)
    g = np.where(active, g_fn(safe), 0.0)
    gprime = np.where(active, gp_fn(safe), 0.0)
    diff = s[:, None] - s[None, :]
    keep = active[:, None] & active[None, :] & ~np.eye(s.size, dtype=bool)
    if tau > 0:
        keep &= np.abs(diff) > thresh
    with np.errstate(divide="ignore"):
        K = np.where(keep, 1.0 / diff, 0.0)
    return SvdGradWorkspace(eig=eig, K=K, g=g, gprime=gprime, active=active)


def grad_svd(A, kind, dLdZ, tau=DEFAULT_TAU, eig=None):
    """Gradient through ``Z = U g(S) U^T`` from the decomposition's derivatives.

    ``dL/dA = U (K^T o (U^T dL/dU) + diag(dL/dS)) U^T`` with
    ``dL/dU = (G + G^T) U g(S)`` and ``dL/dS = g'(S) U^T G U``, followed by
    symmetrization. With ``tau = 0`` nothing is truncated and repeated
    eigenvalues produce non-finite entries.
    """
    G = sym_part(np.asarray(dLdZ))
    A = np.asarray(A)
    if A.shape != G.shape:
        raise InputError(f"dimension mismatch: A {A.shape}, dLdZ {G.shape}")
    if isinstance(kind, Power) and kind.p == 1.0:
        return G.copy()
    if eig is None:
        eig = sym_eig(A)
    ws = svd_grad_workspace(eig, kind, tau)
    U = eig.vectors
    dLdU = (G + G.T) @ (U * ws.g)
    dLdS = ws.gprime * np.einsum("ij,ik,kj->j", U, G, U)
    with np.errstate(invalid="ignore", over="ignore"):
        inner = ws.K.T * (U.T @ dLdU)
        inner[np.diag_indices_from(inner)] += dLdS
        return sym_part(U @ inner @ U.T)


def grad_lyapunov(A, Z, dLdZ, eig_z=None):
    """Square-root gradient as the solution ``X`` of ``Z X + X Z = sym(dL/dZ)``.

    ``Z`` is the forward square root of ``A``; only ``Z`` enters the solve.
    """
    G = sym_part(np.asarray(dLdZ))
    Z = np.asarray(Z)
    if Z.shape != G.shape or np.shape(A) != G.shape:
        raise InputError(f"dimension mismatch: A {np.shape(A)}, Z {Z.shape}, dLdZ {G.shape}")
    return lyap_solve_sym(Z, G, eig=eig_z)


def grad_pass_through(dLdZ):
    return np.array(dLdZ, copy=True)


def finite_diff_grad(f, A, h=1e-5):
    """Central differences of scalar ``f`` over symmetric coordinate pairs.

    Off-diagonal pairs ``(i, j)``/``(j, i)`` move together by ``h/2`` each and
    diagonal entries by ``h``, matching the convention of the analytic
    gradients.
    """
    if not h > 0:
        raise InputError(f"step must be positive, got {h}")
    A = sym_part(np.asarray(A, dtype=np.float64))
    d = A.shape[0]
    G = np.zeros_like(A)
    for i in range(d):
        for j in range(i, d):
            E = np.zeros_like(A)
            if i == j:
                E[i, i] = h
            else:
                E[i, j] = E[j, i] = 0.5 * h
            fp = f(A + E)
            fm = f(A - E)
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise NumericalError(f"non-finite function value when perturbing entry ({i}, {j})")
            G[i, j] = G[j, i] = (fp - fm) / (2.0 * h)
    return G


@dataclass
class GradReport:
    """Entrywise comparison of an analytic gradient with a reference.

    ``max_rel_diff`` is the largest absolute difference divided by the largest
    reference magnitude.
    """

    max_abs_diff: float
    max_rel_diff: float
    analytic_norm: float
    fd_norm: float
    worst_entry: tuple

    @property
    def finite(self):
        return all(np.isfinite([self.max_abs_diff, self.max_rel_diff, self.analytic_norm, self.fd_norm]))


def compare_grads(analytic, reference):
    analytic = np.asarray(analytic, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    scale = max(float(np.max(np.abs(reference))), np.finfo(np.float64).tiny)
    with np.errstate(invalid="ignore"):
        diff = np.abs(analytic - reference)
    bad = ~np.isfinite(diff)
    if bad.any():
        idx = np.unravel_index(int(np.argmax(bad)), diff.shape)
        max_abs = float("inf")
    else:
        idx = np.unravel_index(int(np.argmax(diff)), diff.shape)
        max_abs = float(diff[idx])
    return GradReport(
        max_abs_diff=max_abs,
        max_rel_diff=max_abs / scale,
        analytic_norm=float(np.linalg.norm(analytic)),
        fd_norm=float(np.linalg.norm(reference)),
        worst_entry=tuple(int(i) for i in idx),
    )


def probe_weights(d, seed=0):
    """Deterministic weights of the probe loss ``L(Z) = sum(W * Z)``."""
    return np.random.default_rng(seed).standard_normal((d, d))


def analytic_grad(kind, scheme, A, dLdZ, eig=None):
    """Dispatch a gradient scheme for ``Z = f(A)`` computed spectrally."""
    if isinstance(scheme, PassThrough):
        return grad_pass_through(dLdZ)
    if isinstance(scheme, Lyapunov):
        if not isinstance(kind, Sqrt):
            raise ConfigurationError("Lyapunov gradients are only defined for the square root")
        if eig is None:
            eig = sym_eig(A)
        s = np.sqrt(np.maximum(eig.values, 0))
        Z = mat_fun_spectral(A, kind, eig=eig)
        return grad_lyapunov(A, Z, dLdZ, eig_z=type(eig)(eig.vectors, s))
    if isinstance(scheme, SvdTruncated):
        return grad_svd(A, kind, dLdZ, tau=scheme.tau, eig=eig)
    raise ConfigurationError(f"unknown gradient scheme {scheme!r}")


def grad_check(kind, scheme, A, h=1e-5, seed=0):
    """Compare a gradient scheme against finite differences of a linear probe loss.

    Numerical blow-ups show up as infinite fields rather than exceptions.
    """
    if isinstance(kind, str):
        kind = parse_matfun(kind)
    A = sym_part(np.asarray(A, dtype=np.float64))
    W = probe_weights(A.shape[0], seed)
    reference = finite_diff_grad(lambda M: float(np.sum(W * mat_fun_spectral(M, kind))), A, h)
    with np.errstate(all="ignore"):
        try:
            analytic = analytic_grad(kind, scheme, A, W)
        except NumericalError:
            analytic = np.full_like(A, np.nan)
    return compare_grads(analytic, reference)

