"""Binary persistence, key=value config files and run manifests.

Container layout (little-endian)::

    b"SPDPOOL1"
    record*     array record:  u32 kind, u32 ndims, u64 dims[ndims], f64 data[prod(dims)]
                config record: u32 kind, u64 nbytes, utf-8 "key=value\\n" lines

Arrays are stored in C order. Integer labels are stored as doubles, which is
exact for any realistic class count.
"""

import datetime
import json
import struct
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .errors import ConfigurationError, InputError
from .grad import parse_grad_scheme
from .layers import PipelineConfig
from .matfun import NewtonConfig, parse_matfun
from .train import Dataset, Model, SyntheticSpec, TrainConfig

__all__ = [
    "MAGIC",
    "RecordKind",
    "FormatError",
    "write_container",
    "read_container",
    "save_dataset",
    "load_dataset",
    "save_model",
    "load_model",
    "parse_kv",
    "read_kv_file",
    "format_kv",
    "pipeline_to_kv",
    "pipeline_from_kv",
    "train_config_from_kv",
    "spec_from_kv",
    "RunManifest",
    "write_manifest",
]

MAGIC = b"SPDPOOL1"


class RecordKind:
    FEATURES = 1
    LABELS = 2
    PROJECTION = 3
    WEIGHTS = 4
    CONFIG = 16


_ARRAY_KINDS = {RecordKind.FEATURES, RecordKind.LABELS, RecordKind.PROJECTION, RecordKind.WEIGHTS}


class FormatError(InputError):
    """A container file is truncated, corrupt or of the wrong type."""


def write_container(path, records):
    """Write ``[(kind, payload), ...]``; payload is an array or, for CONFIG, a str."""
    chunks = [MAGIC]
    for kind, payload in records:
        if kind == RecordKind.CONFIG:
            raw = payload.encode("utf-8")
            chunks.append(struct.pack("<IQ", kind, len(raw)))
            chunks.append(raw)
        elif kind in _ARRAY_KINDS:
            arr = np.ascontiguousarray(payload, dtype="<f8")
            chunks.append(struct.pack("<II", kind, arr.ndim))
            chunks.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
            chunks.append(arr.tobytes(order="C"))
        else:
            raise InputError(f"unknown record kind {kind}")
    with open(path, "wb") as fh:
        fh.write(b"".join(chunks))


def _take(buf, pos, n, path):
    if pos + n > len(buf):
        raise FormatError(f"{path}: truncated at byte {pos} (needed {n} more bytes)")
    return buf[pos:pos + n], pos + n


def read_container(path):
    """Return the list of ``(kind, payload)`` records in file order."""
    try:
        with open(path, "rb") as fh:
            buf = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc.strerror}") from exc
    if buf[:8] != MAGIC:
        raise FormatError(f"{path}: not an spdpool container (bad magic)")
    pos = 8
    records = []
    while pos < len(buf):
        head, pos = _take(buf, pos, 4, path)
        (kind,) = struct.unpack("<I", head)
        if kind == RecordKind.CONFIG:
            head, pos = _take(buf, pos, 8, path)
            (nbytes,) = struct.unpack("<Q", head)
            raw, pos = _take(buf, pos, nbytes, path)
            try:
                records.append((kind, raw.decode("utf-8")))
            except UnicodeDecodeError as exc:
                raise FormatError(f"{path}: config block is not valid UTF-8") from exc
        elif kind in _ARRAY_KINDS:
            head, pos = _take(buf, pos, 4, path)
            (ndims,) = struct.unpack("<I", head)
            if ndims > 8:
                raise FormatError(f"{path}: implausible rank {ndims} at byte {pos - 4}")
            head, pos = _take(buf, pos, 8 * ndims, path)
            dims = struct.unpack(f"<{ndims}Q", head)
            count = int(np.prod(dims, dtype=np.uint64)) if ndims else 1
            raw, pos = _take(buf, pos, 8 * count, path)
            records.append((kind, np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)))
        else:
            raise FormatError(f"{path}: unknown record kind {kind} at byte {pos - 4}")
    return records


def _expect(records, kinds, path):
    got = [k for k, _ in records]
    if got != kinds:
        raise FormatError(f"{path}: expected records {kinds}, found {got}")
    return [p for _, p in records]


def save_dataset(path, dataset):
    write_container(path, [
        (RecordKind.FEATURES, dataset.features),
        (RecordKind.LABELS, dataset.labels.astype(np.float64)),
    ])


def load_dataset(path):
    feats, labels = _expect(read_container(path), [RecordKind.FEATURES, RecordKind.LABELS], path)
    if feats.ndim != 3 or labels.ndim != 1 or labels.size != feats.shape[0]:
        raise FormatError(f"{path}: inconsistent shapes {feats.shape} and {labels.shape}")
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise FormatError(f"{path}: labels are not non-negative integers")
    return Dataset(features=feats, labels=labels.astype(np.int64))


def save_model(path, model):
    write_container(path, [
        (RecordKind.CONFIG, format_kv(pipeline_to_kv(model.config))),
        (RecordKind.PROJECTION, model.projection),
        (RecordKind.WEIGHTS, model.weights),
    ])


def load_model(path):
    text, P, W = _expect(
        read_container(path),
        [RecordKind.CONFIG, RecordKind.PROJECTION, RecordKind.WEIGHTS],
        path,
    )
    cfg = pipeline_from_kv(parse_kv(text, source=path))
    if P.ndim != 2 or W.ndim != 2 or W.shape[1] != P.shape[1] ** 2 + 1:
        raise FormatError(f"{path}: projection {P.shape} and weights {W.shape} do not fit together")
    return Model(projection=P, weights=W, config=cfg)


# -- key = value text ---------------------------------------------------------

def parse_kv(text, source="<string>"):
    """Parse ``key = value`` lines; ``#`` starts a comment. Later keys win."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigurationError(f"{source}:{lineno}: expected 'key = value', got {line!r}")
        out[key.replace("-", "_")] = value.strip()
    return out


def read_kv_file(path):
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    return parse_kv(text, source=str(path))


def format_kv(mapping):
    return "".join(f"{k}={v}\n" for k, v in mapping.items())


def _bool(text, key):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key}: expected a boolean, got {text!r}")


def _num(conv, text, key):
    try:
        return conv(text)
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(f"{key}: cannot parse {text!r}") from exc


def pipeline_to_kv(cfg):
    return {
        "epsilon": repr(float(cfg.epsilon)),
        "matfun": "none" if cfg.matfun is None else str(cfg.matfun),
        "forward": cfg.forward,
        "newton_iterations": str(cfg.newton.iterations),
        "newton_scheme": cfg.newton.scheme,
        "newton_scale": cfg.newton.scale_mode,
        "grad_scheme": str(cfg.grad_scheme),
        "signed_sqrt": str(cfg.use_signed_sqrt).lower(),
        "l2": str(cfg.use_l2).lower(),
    }


_PIPELINE_KEYS = set(pipeline_to_kv(PipelineConfig()))


def pipeline_from_kv(kv, base=None):
    """Build a :class:`PipelineConfig` from the pipeline keys of ``kv``; others are ignored."""
    base = PipelineConfig() if base is None else base
    cur = pipeline_to_kv(base)
    cur.update({k: v for k, v in kv.items() if k in _PIPELINE_KEYS})
    newton = NewtonConfig(
        iterations=_num(int, cur["newton_iterations"], "newton_iterations"),
        scheme=cur["newton_scheme"],
        scale_mode=cur["newton_scale"],
    )
    return PipelineConfig(
        epsilon=_num(float, cur["epsilon"], "epsilon"),
        matfun=parse_matfun(cur["matfun"]),
        forward=cur["forward"],
        newton=newton,
        grad_scheme=parse_grad_scheme(cur["grad_scheme"]),
        use_signed_sqrt=_bool(cur["signed_sqrt"], "signed_sqrt"),
        use_l2=_bool(cur["l2"], "l2"),
    )


def _dataclass_from_kv(cls, kv, base, prefix=""):
    kwargs = {}
    for f in fields(cls):
        key = prefix + f.name
        if key not in kv:
            continue
        default = getattr(base, f.name)
        if isinstance(default, bool):
            kwargs[f.name] = _bool(kv[key], key)
        elif isinstance(default, int):
            kwargs[f.name] = _num(int, kv[key], key)
        elif isinstance(default, float):
            kwargs[f.name] = _num(float, kv[key], key)
        else:
            kwargs[f.name] = kv[key]
    return cls(**{**asdict(base), **kwargs})


def train_config_from_kv(kv, base=None):
    return _dataclass_from_kv(TrainConfig, kv, TrainConfig() if base is None else base)


def spec_from_kv(kv, base=None):
    """Synthetic generator keys carry a ``data_`` prefix, e.g. ``data_burst_factor``."""
    return _dataclass_from_kv(SyntheticSpec, kv, SyntheticSpec() if base is None else base, "data_")


# -- manifests ----------------------------------------------------------------

@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    version: str
    outputs: list = field(default_factory=list)
    timestamp: str = field(
        default_factory=lambda: datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
    )


def write_manifest(path, manifest):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(asdict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")
