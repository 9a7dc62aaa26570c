"""Second-order pooling pipeline: pool, matrix function, signed sqrt, l2.

Each stage has a forward and a backward function; :func:`pipeline_forward`
and :func:`pipeline_backward` chain them according to a
:class:`PipelineConfig`. Stages run in the fixed order
pool -> matrix function -> signed square root -> l2, skipping disabled ones.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, InputError
from .grad import Lyapunov, PassThrough, SvdTruncated, grad_lyapunov, grad_svd
from .linalg import SymEig, sym_eig, sym_part
from .matfun import NewtonConfig, Power, Sqrt, mat_fun_spectral, sqrt_iterative

__all__ = [
    "PipelineConfig",
    "PipelineState",
    "bilinear_pool",
    "bilinear_pool_backward",
    "signed_sqrt",
    "signed_sqrt_backward",
    "l2_normalize",
    "l2_normalize_backward",
    "pipeline_forward",
    "pipeline_backward",
    "softmax_xent_forward",
    "softmax_xent_backward",
    "SIGNED_SQRT_CLAMP",
]

SIGNED_SQRT_CLAMP = 1e-12


@dataclass(frozen=True)
class PipelineConfig:
    """Normalization stages and how the matrix function is computed/differentiated.

    ``forward`` is ``"spectral"`` or ``"iterative"``; the iterative square root
    uses ``newton``.
    """

    epsilon: float = 1.0
    matfun: object = None
    forward: str = "spectral"
    newton: NewtonConfig = field(default_factory=NewtonConfig)
    grad_scheme: object = field(default_factory=Lyapunov)
    use_signed_sqrt: bool = True
    use_l2: bool = True

    def __post_init__(self):
        if self.epsilon < 0:
            raise ConfigurationError(f"epsilon must be non-negative, got {self.epsilon}")
        if self.forward not in ("spectral", "iterative"):
            raise ConfigurationError(f"unknown forward mode {self.forward!r}")
        if self.forward == "iterative" and not isinstance(self.matfun, Sqrt):
            raise ConfigurationError("iterative forward is only available for the square root")
        if self.matfun is not None and isinstance(self.grad_scheme, Lyapunov) and not isinstance(self.matfun, Sqrt):
            raise ConfigurationError("Lyapunov gradients require the square root")
        if not isinstance(self.grad_scheme, (Lyapunov, PassThrough, SvdTruncated)):
            raise ConfigurationError(f"unknown gradient scheme {self.grad_scheme!r}")


@dataclass
class PipelineState:
    """Intermediates cached by the forward pass; consumed by one backward."""

    F: np.ndarray
    A: np.ndarray
    eig: SymEig = None
    Z: np.ndarray = None
    trace: list = None
    S: np.ndarray = None
    pre_l2: np.ndarray = None
    consumed: bool = False


def _check_features(F):
    F = np.asarray(F)
    if F.ndim != 2:
        raise InputError(f"feature map must be n x d, got shape {F.shape}")
    if F.shape[0] == 0:
        raise InputError("feature map has no locations")
    if not np.all(np.isfinite(F)):
        raise InputError("feature map has non-finite entries")
    return F


def bilinear_pool(F, epsilon=0.0):
    """``A = F^T F / n + epsilon I``.

    Rows are put in a canonical order first so that the summation order, and
    therefore every bit of ``A``, is independent of the location order.
    """
    F = _check_features(F)
    if epsilon < 0:
        raise InputError(f"epsilon must be non-negative, got {epsilon}")
    n, d = F.shape
    Fs = F[np.lexsort(F.T[::-1])]
    A = sym_part(Fs.T @ Fs) / n
    A[np.diag_indices(d)] += epsilon
    return A


def bilinear_pool_backward(F, dLdA):
    F = np.asarray(F)
    dLdA = np.asarray(dLdA)
    if dLdA.shape != (F.shape[1], F.shape[1]):
        raise InputError(f"dimension mismatch: F {F.shape}, dLdA {dLdA.shape}")
    return (2.0 / F.shape[0]) * (F @ sym_part(dLdA))


def signed_sqrt(M):
    M = np.asarray(M)
    return np.sign(M) * np.sqrt(np.abs(M))


def signed_sqrt_backward(M, dLdY):
    M = np.asarray(M)
    return np.asarray(dLdY) / (2.0 * np.sqrt(np.maximum(np.abs(M), SIGNED_SQRT_CLAMP)))


def l2_normalize(M):
    M = np.asarray(M)
    r = np.linalg.norm(M)
    if r == 0:
        raise InputError("cannot l2-normalize the zero matrix")
    return M / r


def l2_normalize_backward(M, dLdY):
    M = np.asarray(M)
    dLdY = np.asarray(dLdY)
    r = np.linalg.norm(M)
    if r == 0:
        raise InputError("cannot l2-normalize the zero matrix")
    Y = M / r
    return (dLdY - Y * np.sum(dLdY * Y)) / r


def pipeline_forward(F, cfg):
    """Return ``(descriptor, state)``; the descriptor is the row-major d*d flattening."""
    F = _check_features(F)
    A = bilinear_pool(F, cfg.epsilon)
    state = PipelineState(F=F, A=A)
    M = A
    kind = cfg.matfun
    if kind is not None and not (isinstance(kind, Power) and kind.p == 1.0):
        if cfg.forward == "iterative":
            M, state.trace = sqrt_iterative(A, cfg.newton)
        else:
            state.eig = sym_eig(A)
            M = mat_fun_spectral(A, kind, eig=state.eig)
        state.Z = M
    if cfg.use_signed_sqrt:
        state.S = M
        M = signed_sqrt(M)
    if cfg.use_l2:
        state.pre_l2 = M
        M = l2_normalize(M)
    return M.reshape(-1), state


def _matfun_backward(G, state, cfg):
    kind = cfg.matfun
    scheme = cfg.grad_scheme
    if kind is None or (isinstance(kind, Power) and kind.p == 1.0) or isinstance(scheme, PassThrough):
        return G
    A = state.A
    if isinstance(scheme, Lyapunov):
        eig_z = None
        if state.eig is not None:
            eig_z = SymEig(state.eig.vectors, np.sqrt(np.maximum(state.eig.values, 0)))
        return grad_lyapunov(A, state.Z, G, eig_z=eig_z)
    eig = state.eig if state.eig is not None else sym_eig(A)
    return grad_svd(A, kind, G, tau=scheme.tau, eig=eig)


def pipeline_backward(dLdDescriptor, state, cfg):
    """Gradient of the loss with respect to the n x d feature map."""
    if state.consumed:
        raise InputError("pipeline state was already consumed by a backward pass")
    d = state.A.shape[0]
    G = np.asarray(dLdDescriptor)
    if G.size != d * d:
        raise InputError(f"descriptor gradient has {G.size} entries, expected {d * d}")
    if cfg.use_l2 != (state.pre_l2 is not None) or cfg.use_signed_sqrt != (state.S is not None):
        raise InputError("pipeline state does not match the configuration")
    G = G.reshape(d, d)
    if cfg.use_l2:
        G = l2_normalize_backward(state.pre_l2, G)
    if cfg.use_signed_sqrt:
        G = signed_sqrt_backward(state.S, G)
    G = _matfun_backward(sym_part(G), state, cfg)
    state.consumed = True
    return bilinear_pool_backward(state.F, G)


def _augment(X):
    X = np.atleast_2d(np.asarray(X))
    return np.concatenate([X, np.ones((X.shape[0], 1), dtype=X.dtype)], axis=1)


def _check_labels(labels, k):
    labels = np.asarray(labels)
    if labels.ndim != 1 or labels.size == 0:
        raise InputError("labels must be a non-empty 1-d array")
    if np.any(labels < 0) or np.any(labels >= k) or np.any(labels != np.round(labels)):
        raise InputError(f"labels must be integers in [0, {k})")
    return labels.astype(np.int64)


def softmax_xent_forward(X, labels, W):
    """Mean multinomial logistic loss of a linear layer with bias.

    ``W`` has shape ``(k, D + 1)``; the last column multiplies a constant 1.
    Returns ``(loss, probs)``.
    """
    Xa = _augment(X)
    W = np.asarray(W)
    if W.ndim != 2 or W.shape[1] != Xa.shape[1]:
        raise InputError(f"weights {W.shape} do not match descriptors of size {Xa.shape[1] - 1}")
    labels = _check_labels(labels, W.shape[0])
    if labels.size != Xa.shape[0]:
        raise InputError("number of labels and descriptors differ")
    logits = Xa @ W.T
    logits = logits - logits.max(axis=1, keepdims=True)
    logZ = np.log(np.exp(logits).sum(axis=1))
    logp = logits - logZ[:, None]
    loss = -float(np.mean(logp[np.arange(labels.size), labels]))
    return loss, np.exp(logp)


def softmax_xent_backward(X, labels, W, probs):
    """Return ``(dL/dX, dL/dW)`` for the mean loss."""
    Xa = _augment(X)
    labels = _check_labels(labels, np.shape(W)[0])
    B = labels.size
    delta = probs.copy()
    delta[np.arange(B), labels] -= 1.0
    delta /= B
    dW = delta.T @ Xa
    dX = delta @ np.asarray(W)[:, :-1]
    return dX, dW
