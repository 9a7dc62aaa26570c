"""Desk-scale training: synthetic bursty features, SGD with momentum, evaluation.

The trainable network is a linear projection of the local features (standing
in for the last convolutional layer), the normalization pipeline, and a
softmax classifier. The classifier is first fit with the projection frozen,
then everything is trained jointly.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, InputError, NumericalError, TrainingDiverged
from .layers import (
    PipelineConfig,
    pipeline_backward,
    pipeline_forward,
    softmax_xent_backward,
    softmax_xent_forward,
)
from .grad import Lyapunov, PassThrough, SvdTruncated
from .matfun import Power, Sqrt

log = logging.getLogger(__name__)

__all__ = [
    "SyntheticSpec",
    "Dataset",
    "TrainConfig",
    "Model",
    "TrainResult",
    "generate_synthetic",
    "generate_split",
    "BENCHMARK_SPEC",
    "BENCHMARK_EPSILON",
    "BENCHMARK_TRAIN",
    "BENCHMARK_SEEDS",
    "BENCHMARK_TEST_PER_CLASS",
    "make_benchmark",
    "ablation_benchmark",
    "sweep_benchmark",
    "describe",
    "init_model",
    "train",
    "train_classifier",
    "evaluate",
    "dataset_loss",
    "predict",
    "exponent_sweep",
]


@dataclass(frozen=True)
class SyntheticSpec:
    """Generator settings.

    Every class owns ``signature_size`` directions drawn from a pool of
    ``pool_size`` unit vectors shared by all classes. Each location of a sample
    shows one signature direction of its class, chosen uniformly; per sample,
    one of them is repeated by a random factor between 1 and ``burst_factor``
    (log-uniform) so that it dominates the pooled covariance. ``amplitude`` scales all features,
    setting the eigenvalue range relative to the diagonal shift. The last
    ``clutter_channels`` channels carry no class signal, only extra noise of
    standard deviation ``clutter_sigma``; a learned projection can suppress them.
    """

    classes: int = 4
    channels: int = 8
    locations: int = 32
    samples_per_class: int = 40
    burst_factor: float = 10.0
    noise_sigma: float = 0.3
    pool_size: int = 6
    signature_size: int = 3
    amplitude: float = 30.0
    clutter_channels: int = 0
    clutter_sigma: float = 0.0

    def __post_init__(self):
        if self.classes < 2 or self.channels < 2:
            raise ConfigurationError("need at least 2 classes and 2 channels")
        if self.burst_factor < 1:
            raise ConfigurationError(f"burst_factor must be >= 1, got {self.burst_factor}")
        if self.noise_sigma < 0:
            raise ConfigurationError("noise_sigma must be non-negative")
        if not 1 <= self.signature_size <= self.pool_size:
            raise ConfigurationError("signature_size must lie in [1, pool_size]")
        if not 0 <= self.clutter_channels < self.channels or self.clutter_sigma < 0:
            raise ConfigurationError("need 0 <= clutter_channels < channels and clutter_sigma >= 0")
        if self.locations < 1 or self.samples_per_class < 1:
            raise ConfigurationError("locations and samples_per_class must be positive")


@dataclass
class Dataset:
    features: np.ndarray  # (N, n, d)
    labels: np.ndarray  # (N,) int

    def __len__(self):
        return int(self.labels.size)

    @property
    def classes(self):
        return int(self.labels.max()) + 1


@dataclass(frozen=True)
class TrainConfig:
    """SGD settings. ``learning_rate`` and ``momentum`` drive joint training;
    the classifier-only phase uses ``init_learning_rate`` for ``init_epochs``.
    ``svm_C`` is recorded for reference only."""

    learning_rate: float = 0.001
    momentum: float = 0.9
    epochs: int = 50
    batch_size: int = 8
    seed: int = 0
    init_epochs: int = 10
    init_learning_rate: float = 1.0
    weight_decay: float = 0.0
    dtype: str = "float64"
    svm_C: float = 1.0

    def __post_init__(self):
        if self.learning_rate < 0 or self.init_learning_rate < 0:
            raise ConfigurationError("learning rates must be non-negative")
        if not 0 <= self.momentum < 1:
            raise ConfigurationError(f"momentum must lie in [0, 1), got {self.momentum}")
        if self.epochs < 0 or self.init_epochs < 0:
            raise ConfigurationError("epoch counts must be non-negative")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be positive")
        if self.dtype not in ("float64", "float32"):
            raise ConfigurationError(f"dtype must be float64 or float32, got {self.dtype!r}")


@dataclass
class Model:
    projection: np.ndarray  # (d_in, d)
    weights: np.ndarray  # (k, d*d + 1), last column is the bias
    config: PipelineConfig = field(default_factory=PipelineConfig)


@dataclass
class TrainResult:
    init_losses: list
    losses: list


# Frozen benchmark used by the ablation regression tests. Features have unit
# scale and a small diagonal shift, so the matrix function acts on a spectrum
# spanning several decades; two clutter channels give the learned projection
# something to suppress.
BENCHMARK_SPEC = SyntheticSpec(
    burst_factor=100.0,
    noise_sigma=0.1,
    amplitude=1.0,
    clutter_channels=2,
    clutter_sigma=1.0,
)
BENCHMARK_EPSILON = 1e-3
BENCHMARK_TRAIN = TrainConfig(
    learning_rate=0.01,
    epochs=100,
    init_epochs=50,
    init_learning_rate=0.1,
)
BENCHMARK_SEEDS = (0, 1, 2, 3, 4, 5)
BENCHMARK_TEST_PER_CLASS = 200


def _unit_rows(X):
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def generate_synthetic(spec, seed=0):
    """Labelled feature maps; bit-identical for a fixed ``(spec, seed)``.

    The direction pool and class signatures depend only on ``seed``'s first
    child stream, so train/test splits drawn with :func:`generate_split` share
    them.
    """
    return generate_split(spec, seed, split=0)


def generate_split(spec, seed=0, split=0):
    """Draw split 0 (train) or 1 (test) of the world defined by ``seed``."""
    root = np.random.SeedSequence(seed)
    world_seq, *split_seqs = root.spawn(3)
    if split not in (0, 1):
        raise InputError("split must be 0 (train) or 1 (test)")
    world = np.random.default_rng(world_seq)
    signal_dims = spec.channels - spec.clutter_channels
    pool = np.zeros((spec.pool_size, spec.channels))
    pool[:, :signal_dims] = _unit_rows(world.standard_normal((spec.pool_size, signal_dims)))
    signatures = np.stack(
        [world.permutation(spec.pool_size)[: spec.signature_size] for _ in range(spec.classes)]
    )
    rng = np.random.default_rng(split_seqs[split])
    N = spec.classes * spec.samples_per_class
    n, d = spec.locations, spec.channels
    feats = np.empty((N, n, d))
    labels = np.repeat(np.arange(spec.classes), spec.samples_per_class)
    for s, c in enumerate(labels):
        pick = rng.integers(spec.signature_size, size=n)
        amp = rng.standard_normal(n)
        # scaling amplitudes by sqrt(r) weighs the burst direction in the
        # covariance as if its locations were repeated r times
        burst = rng.integers(spec.signature_size)
        amp[pick == burst] *= np.sqrt(spec.burst_factor ** rng.uniform(0.0, 1.0))
        feats[s] = amp[:, None] * pool[signatures[c, pick]]
        feats[s] += spec.noise_sigma * rng.standard_normal((n, d))
        if spec.clutter_channels:
            feats[s, :, signal_dims:] += spec.clutter_sigma * rng.standard_normal((n, spec.clutter_channels))
        feats[s] *= spec.amplitude
    order = rng.permutation(N)
    return Dataset(features=feats[order], labels=labels[order])


def make_benchmark(seed, spec=BENCHMARK_SPEC, test_per_class=BENCHMARK_TEST_PER_CLASS):
    """``(train, test)`` datasets of the frozen benchmark for one seed."""
    train_set = generate_split(spec, seed, 0)
    test_set = generate_split(replace(spec, samples_per_class=test_per_class), seed, 1)
    return train_set, test_set


def describe(features, projection, cfg, dtype=np.float64):
    """Descriptors (N, d*d) of all samples under a fixed projection."""
    P = projection.astype(dtype, copy=False)
    return np.stack([pipeline_forward(F.astype(dtype, copy=False) @ P, cfg)[0] for F in features])


def init_model(channels_in, classes, cfg, channels=None):
    d = channels_in if channels is None else channels
    P = np.eye(channels_in, d)
    W = np.zeros((classes, d * d + 1))
    return Model(projection=P, weights=W, config=cfg)


def _check_finite(loss, epoch, *params):
    if not np.isfinite(loss) or not all(np.all(np.isfinite(p)) for p in params):
        raise TrainingDiverged(epoch, loss)


def _batches(rng, N, batch_size):
    order = rng.permutation(N)
    return [order[i:i + batch_size] for i in range(0, N, batch_size)]


def train_classifier(model, dataset, tcfg, epochs=None, lr=None, rng=None):
    """Fit only the classifier on frozen descriptors. Returns per-epoch mean losses."""
    dtype = np.dtype(tcfg.dtype)
    epochs = tcfg.init_epochs if epochs is None else epochs
    lr = tcfg.init_learning_rate if lr is None else lr
    rng = np.random.default_rng(tcfg.seed) if rng is None else rng
    X = describe(dataset.features, model.projection, model.config, dtype)
    W = model.weights.astype(dtype)
    V = np.zeros_like(W)
    losses = []
    for epoch in range(epochs):
        total = 0.0
        for idx in _batches(rng, len(dataset), tcfg.batch_size):
            loss, probs = softmax_xent_forward(X[idx], dataset.labels[idx], W)
            _, dW = softmax_xent_backward(X[idx], dataset.labels[idx], W, probs)
            dW = dW + tcfg.weight_decay * W
            V = tcfg.momentum * V - lr * dW
            W = W + V
            total += loss * idx.size
            _check_finite(loss, epoch, W)
        losses.append(total / len(dataset))
        _check_finite(losses[-1], epoch)
    model.weights = W.astype(np.float64)
    return losses


def train(dataset, cfg, tcfg, model=None, channels=None):
    """Classifier initialization followed by joint SGD with momentum.

    Returns ``(model, TrainResult)``. Deterministic for a fixed ``tcfg.seed``.
    Raises :class:`TrainingDiverged` with the epoch index if the loss becomes
    non-finite.
    """
    dtype = np.dtype(tcfg.dtype)
    rng = np.random.default_rng(tcfg.seed)
    if not np.all(np.isfinite(dataset.features)):
        raise InputError("dataset has non-finite features")
    if model is None:
        model = init_model(dataset.features.shape[2], dataset.classes, cfg, channels)
    else:
        model = replace(model, config=cfg)
    init_losses = train_classifier(model, dataset, tcfg, rng=rng)

    P = model.projection.astype(dtype)
    W = model.weights.astype(dtype)
    VP = np.zeros_like(P)
    VW = np.zeros_like(W)
    lr = tcfg.learning_rate
    losses = []
    for epoch in range(tcfg.epochs):
        total = 0.0
        for idx in _batches(rng, len(dataset), tcfg.batch_size):
            feats = dataset.features[idx].astype(dtype, copy=False)
            labels = dataset.labels[idx]
            try:
                with np.errstate(over="ignore", invalid="ignore"):
                    outs = [pipeline_forward(F @ P, cfg) for F in feats]
                X = np.stack([o[0] for o in outs])
                loss, probs = softmax_xent_forward(X, labels, W)
                dX, dW = softmax_xent_backward(X, labels, W, probs)
                dP = np.zeros_like(P)
                for F, (_, state), g in zip(feats, outs, dX):
                    dP += F.T @ pipeline_backward(g, state, cfg)
            except (InputError, NumericalError) as exc:
                # the data were checked up front, so this is the parameters blowing up
                raise TrainingDiverged(epoch, float("nan")) from exc
            dW = dW + tcfg.weight_decay * W
            VW = tcfg.momentum * VW - lr * dW
            VP = tcfg.momentum * VP - lr * dP
            W = W + VW
            P = P + VP
            total += loss * idx.size
            _check_finite(loss, epoch, W, P)
        losses.append(total / len(dataset))
        _check_finite(losses[-1], epoch)
        log.debug("epoch %d loss %.6f", epoch, losses[-1])
    model.projection = P.astype(np.float64)
    model.weights = W.astype(np.float64)
    return model, TrainResult(init_losses=init_losses, losses=losses)


def predict(model, dataset, dtype=np.float64):
    X = describe(dataset.features, model.projection, model.config, dtype)
    logits = np.concatenate([X, np.ones((X.shape[0], 1))], axis=1) @ model.weights.T
    # argmax returns the lowest index among ties
    return np.argmax(logits, axis=1)


def evaluate(model, dataset):
    """Fraction of samples whose argmax prediction equals the label."""
    return float(np.mean(predict(model, dataset) == dataset.labels))


def dataset_loss(model, dataset, dtype=np.float64):
    """Mean cross-entropy of ``model`` over the whole dataset."""
    X = describe(dataset.features, model.projection, model.config, dtype)
    return softmax_xent_forward(X, dataset.labels, model.weights.astype(dtype))[0]


def exponent_sweep(train_set, test_set, p_values, tcfg, base_cfg=None):
    """Test accuracy of classifier-only training for each ``A^p`` normalization.

    Returns a list of ``(p, accuracy)`` pairs in the order given.
    """
    base_cfg = PipelineConfig() if base_cfg is None else base_cfg
    out = []
    for p in p_values:
        cfg = replace(base_cfg, matfun=Power(float(p)), forward="spectral", grad_scheme=SvdTruncated())
        model = init_model(train_set.features.shape[2], train_set.classes, cfg)
        train_classifier(model, train_set, tcfg)
        out.append((float(p), evaluate(model, test_set)))
    return out


def _mean(values):
    return float(np.mean(values))


def ablation_benchmark(seeds=BENCHMARK_SEEDS, tcfg=BENCHMARK_TRAIN):
    """Mean test accuracy of the normalization and fine-tuning variants.

    ``sgnsqrt``: signed square root alone. ``sqrt+sgnsqrt``: matrix square root
    then signed square root, classifier only (this is also the untrained
    starting point of fine-tuning). ``lyapunov`` / ``pass-through``: the same
    pipeline trained jointly with each backward scheme. Returns
    ``(means, per_seed)``.
    """
    eps = BENCHMARK_EPSILON
    variants = {
        "sgnsqrt": (PipelineConfig(epsilon=eps), False),
        "sqrt+sgnsqrt": (PipelineConfig(epsilon=eps, matfun=Sqrt()), False),
        "lyapunov": (PipelineConfig(epsilon=eps, matfun=Sqrt(), grad_scheme=Lyapunov()), True),
        "pass-through": (PipelineConfig(epsilon=eps, matfun=Sqrt(), grad_scheme=PassThrough()), True),
    }
    per_seed = {name: [] for name in variants}
    for seed in seeds:
        train_set, test_set = make_benchmark(seed)
        run_cfg = replace(tcfg, seed=seed)
        for name, (cfg, joint) in variants.items():
            if joint:
                model, _ = train(train_set, cfg, run_cfg)
            else:
                model = init_model(train_set.features.shape[2], train_set.classes, cfg)
                train_classifier(model, train_set, run_cfg)
            per_seed[name].append(evaluate(model, test_set))
    return {k: _mean(v) for k, v in per_seed.items()}, per_seed


def sweep_benchmark(p_values=(1.0, 0.75, 0.5, 0.25), seeds=BENCHMARK_SEEDS, tcfg=BENCHMARK_TRAIN):
    """Mean test accuracy per exponent, plus the no-matrix-function baseline.

    Returns ``(means, per_seed)``; the baseline is stored under ``"baseline"``.
    """
    base = PipelineConfig(epsilon=BENCHMARK_EPSILON)
    per_seed = {"baseline": [], **{float(p): [] for p in p_values}}
    for seed in seeds:
        train_set, test_set = make_benchmark(seed)
        run_cfg = replace(tcfg, seed=seed)
        for p, acc in exponent_sweep(train_set, test_set, p_values, run_cfg, base):
            per_seed[p].append(acc)
        model = init_model(train_set.features.shape[2], train_set.classes, base)
        train_classifier(model, train_set, run_cfg)
        per_seed["baseline"].append(evaluate(model, test_set))
    return {k: _mean(v) for k, v in per_seed.items()}, per_seed
