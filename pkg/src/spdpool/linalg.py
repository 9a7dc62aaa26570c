"""Dense symmetric linear algebra.

Matrices are plain ``numpy.ndarray`` objects. Eigendecompositions are returned
as :class:`SymEig` with eigenvalues sorted in descending order and a fixed
eigenvector sign convention, so results are reproducible across runs.
"""

import math
from typing import NamedTuple

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError, SingularError

__all__ = [
    "SymEig",
    "sym_eig",
    "sym_part",
    "frob_norm",
    "mat_mul",
    "lyap_solve_sym",
    "lyap_solve_kron",
    "reconstruct",
    "random_spd",
    "spectrum",
]


class SymEig(NamedTuple):
    """Spectral decomposition ``A = U diag(values) U^T``, values descending."""

    vectors: np.ndarray
    values: np.ndarray


def _check_square(M, name="matrix"):
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise InputError(f"{name} must be square, got shape {M.shape}")
    return M


def sym_part(M):
    """Return ``(M + M^T) / 2``, which is exactly symmetric in floating point."""
    M = _check_square(M)
    return 0.5 * (M + M.T)


def frob_norm(M):
    return float(np.linalg.norm(np.asarray(M), "fro"))


def mat_mul(M, N):
    M = np.asarray(M)
    N = np.asarray(N)
    if M.ndim != 2 or N.ndim != 2 or M.shape[1] != N.shape[0]:
        raise InputError(f"dimension mismatch: {M.shape} @ {N.shape}")
    return M @ N


def _fix_signs(U):
    # largest-magnitude component positive; near-ties resolved by lowest index
    mag = np.abs(U)
    peak = mag.max(axis=0, keepdims=True)
    first = np.argmax(mag >= peak * (1.0 - 1e-9), axis=0)
    signs = np.sign(U[first, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


def _householder_tridiag(A):
    """Reduce symmetric ``A`` to tridiagonal ``T = Q^T A Q``.

    Returns the diagonal, the subdiagonal and the accumulated orthogonal ``Q``.
    """
    T = np.array(A, dtype=np.float64, copy=True)
    d = T.shape[0]
    Q = np.eye(d)
    for k in range(d - 2):
        x = T[k + 1:, k]
        xnorm = np.linalg.norm(x)
        if xnorm == 0.0:
            continue
        alpha = -math.copysign(xnorm, x[0])
        v = x.copy()
        v[0] -= alpha
        vnorm = np.linalg.norm(v)
        if vnorm == 0.0:
            continue
        v /= vnorm
        T[k + 1:, :] -= 2.0 * np.outer(v, v @ T[k + 1:, :])
        T[:, k + 1:] -= 2.0 * np.outer(T[:, k + 1:] @ v, v)
        Q[:, k + 1:] -= 2.0 * np.outer(Q[:, k + 1:] @ v, v)
    return np.diag(T).copy(), np.append(np.diag(T, -1), 0.0), Q


def _tql_implicit(diag, off, Q, max_sweeps=30):
    """Implicit-shift QL on a symmetric tridiagonal matrix (EISPACK ``tql2``).

    ``off[i]`` couples ``i`` and ``i + 1``; ``off[-1]`` must be zero. Rotations
    are accumulated into the columns of ``Q``.
    """
    d = diag.copy()
    e = off.copy()
    n = d.size
    Zt = np.ascontiguousarray(Q.T)  # rows are eigenvector candidates
    eps = np.finfo(np.float64).eps
    f = 0.0
    tst1 = 0.0
    for l in range(n):
        tst1 = max(tst1, abs(d[l]) + abs(e[l]))
        m = l
        while m < n - 1 and abs(e[m]) > eps * tst1:
            m += 1
        if m > l:
            it = 0
            while True:
                it += 1
                if it > max_sweeps * n:
                    raise NumericalError(
                        f"QL iteration did not converge (dim {n}, "
                        f"norm {np.sqrt(np.sum(d**2) + 2 * np.sum(e**2)):.3e})"
                    )
                g = d[l]
                p = (d[l + 1] - g) / (2.0 * e[l])
                r = math.hypot(p, 1.0)
                if p < 0:
                    r = -r
                d[l] = e[l] / (p + r)
                d[l + 1] = e[l] * (p + r)
                dl1 = d[l + 1]
                h = g - d[l]
                d[l + 2:] -= h
                f += h
                p = d[m]
                c = c2 = c3 = 1.0
                el1 = e[l + 1]
                s = s2 = 0.0
                for i in range(m - 1, l - 1, -1):
                    c3 = c2
                    c2 = c
                    s2 = s
                    g = c * e[i]
                    h = c * p
                    r = math.hypot(p, e[i])
                    e[i + 1] = s * r
                    s = e[i] / r
                    c = p / r
                    p = c * d[i] - s * g
                    d[i + 1] = h + s * (c * g + s * d[i])
                    zi1 = Zt[i + 1].copy()
                    Zt[i + 1] = s * Zt[i] + c * zi1
                    Zt[i] = c * Zt[i] - s * zi1
                p = -s * s2 * c3 * el1 * e[l] / dl1
                e[l] = s * p
                d[l] = c * p
                if abs(e[l]) <= eps * tst1:
                    break
        d[l] += f
        e[l] = 0.0
    return d, Zt.T


def sym_eig(A, method="lapack"):
    """Symmetric eigendecomposition with descending eigenvalues.

    ``method="lapack"`` calls LAPACK ``dsyev`` (Householder tridiagonalization
    followed by implicit QL/QR). ``method="ql"`` runs the same algorithm in
    this module; it is slower and kept as an independent implementation.
    """
    A = _check_square(A)
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    S = sym_part(A)
    d = S.shape[0]
    if d == 0:
        raise InputError("empty matrix")
    if method == "lapack":
        try:
            w, U = scipy.linalg.eigh(S, driver="ev", check_finite=False)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise NumericalError(
                f"eigendecomposition failed (dim {d}, norm {frob_norm(S):.3e}): {exc}"
            ) from exc
    elif method == "ql":
        if d == 1:
            w, U = S[0].astype(np.float64), np.ones((1, 1))
        else:
            diag, off, Q = _householder_tridiag(S)
            w, U = _tql_implicit(diag, off, Q)
    else:
        raise InputError(f"unknown eigendecomposition method {method!r}")
    order = np.argsort(w, kind="stable")[::-1]
    U = _fix_signs(np.asarray(U)[:, order])
    return SymEig(U.astype(S.dtype, copy=False), np.asarray(w)[order].astype(S.dtype, copy=False))


def reconstruct(eig, values=None):
    """``U diag(values) U^T``; defaults to the decomposition's own eigenvalues."""
    U = eig.vectors
    v = eig.values if values is None else values
    return sym_part((U * v) @ U.T)


def lyap_solve_sym(S, B, eig=None, rtol=None):
    """Solve ``S X + X S = B`` for symmetric positive definite ``S``.

    Diagonalizes ``S`` (or reuses ``eig``), divides in the eigenbasis by
    ``s_i + s_j`` and transforms back. ``rtol`` bounds the smallest admissible
    eigenvalue relative to the largest; at or below it the pencil is treated
    as singular.
    """
    S = _check_square(S, "S")
    B = _check_square(B, "B")
    if S.shape != B.shape:
        raise InputError(f"dimension mismatch: S {S.shape}, B {B.shape}")
    if eig is None:
        eig = sym_eig(S)
    s = eig.values
    if rtol is None:
        rtol = 10 * np.finfo(s.dtype).eps
    smax = max(abs(float(s[0])), np.finfo(s.dtype).tiny)
    if not s[-1] > rtol * smax:
        raise SingularError(
            f"Lyapunov operator is singular: smallest eigenvalue {float(s[-1]):.3e} "
            f"(largest {float(s[0]):.3e}); add a positive diagonal shift (epsilon) upstream"
        )
    U = eig.vectors
    Bt = U.T @ B @ U
    Xt = Bt / (s[:, None] + s[None, :])
    return sym_part(U @ Xt @ U.T)


def lyap_solve_kron(S, B):
    """Brute-force solve of ``(S kron I + I kron S) vec(X) = vec(B)``.

    O(d^6); used as an oracle for :func:`lyap_solve_sym` on small matrices.
    """
    S = _check_square(S, "S")
    B = _check_square(B, "B")
    d = S.shape[0]
    I = np.eye(d)
    L = np.kron(S, I) + np.kron(I, S)
    x = np.linalg.solve(L, B.reshape(-1, order="F"))
    return x.reshape(d, d, order="F")


def spectrum(d, cond, profile="geometric", scale=10.0, gap=1e-9):
    """Eigenvalue profiles used by tests and benchmarks, descending.

    ``geometric``: evenly spaced in log between ``scale`` and ``scale/cond``.
    ``clustered``: geometric pairs ``(b + gap, b)``, so neighbouring
    eigenvalues differ by ``gap``. ``degenerate``: all equal to ``scale``.
    """
    if profile == "geometric":
        return np.geomspace(scale, scale / cond, d)
    if profile == "clustered":
        base = np.geomspace(scale, scale / cond, (d + 1) // 2)
        pairs = np.stack([base + gap, base], axis=1).ravel()
        return pairs[:d]
    if profile == "degenerate":
        return np.full(d, float(scale))
    raise InputError(f"unknown spectrum profile {profile!r}")


def random_spd(d, cond=100.0, rng=None, profile="geometric", scale=10.0, gap=1e-9):
    """Random SPD matrix ``Q diag(s) Q^T`` with Haar-distributed ``Q``."""
    rng = np.random.default_rng(rng)
    s = spectrum(d, cond, profile=profile, scale=scale, gap=gap)
    Q, R = np.linalg.qr(rng.standard_normal((d, d)))
    Q = Q * np.sign(np.diag(R))
    return sym_part((Q * s) @ Q.T)
