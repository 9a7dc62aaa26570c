"""Second-order pooling with matrix-function normalization.

Bilinear pooling of local features, matrix square root / power / logarithm
of the pooled SPD matrix (spectral or iterative), exact and approximate
backward passes, and desk-scale training utilities.
"""

__version__ = "0.1.0"

from .errors import (
    ConfigurationError,
    DomainError,
    InputError,
    NumericalError,
    PreconditionError,
    SingularError,
    SpdPoolError,
    TrainingDiverged,
)
from .grad import (
    GradReport,
    Lyapunov,
    PassThrough,
    SvdTruncated,
    finite_diff_grad,
    grad_check,
    grad_lyapunov,
    grad_pass_through,
    grad_svd,
)
from .layers import PipelineConfig, pipeline_backward, pipeline_forward
from .linalg import SymEig, lyap_solve_kron, lyap_solve_sym, random_spd, sym_eig
from .matfun import (
    Log,
    NewtonConfig,
    Power,
    Sqrt,
    log_scaling_squaring,
    mat_fun_spectral,
    sqrt_denman_beavers,
    sqrt_iterative,
    sqrt_newton_schulz,
)
from .train import (
    Dataset,
    Model,
    SyntheticSpec,
    TrainConfig,
    evaluate,
    exponent_sweep,
    generate_synthetic,
    make_benchmark,
    train,
)
