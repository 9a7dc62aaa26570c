import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spdpool.errors import ConfigurationError
from spdpool.grad import PassThrough, SvdTruncated
from spdpool.io import (
    MAGIC,
    FormatError,
    RecordKind,
    RunManifest,
    format_kv,
    load_dataset,
    load_model,
    parse_kv,
    pipeline_from_kv,
    pipeline_to_kv,
    read_container,
    read_kv_file,
    save_dataset,
    save_model,
    spec_from_kv,
    train_config_from_kv,
    write_container,
    write_manifest,
)
from spdpool.layers import PipelineConfig
from spdpool.matfun import Log, NewtonConfig, Power, Sqrt
from spdpool.train import Dataset, Model, SyntheticSpec, TrainConfig, generate_synthetic


def test_container_layout(tmp_path):
    path = tmp_path / "x.bin"
    write_container(path, [(RecordKind.WEIGHTS, np.array([[1.0, 2.0]])), (RecordKind.CONFIG, "a=1\n")])
    raw = path.read_bytes()
    assert raw[:8] == MAGIC
    assert struct.unpack("<IIQQ", raw[8:32]) == (RecordKind.WEIGHTS, 2, 1, 2)
    assert struct.unpack("<2d", raw[32:48]) == (1.0, 2.0)
    assert struct.unpack("<IQ", raw[48:60]) == (RecordKind.CONFIG, 4)
    assert raw[60:] == b"a=1\n"


def test_dataset_roundtrip_bit_exact(tmp_path):
    ds = generate_synthetic(SyntheticSpec(samples_per_class=3), 0)
    ds.features[0, 0, 0] = -0.0
    ds.features[0, 0, 1] = 5e-324
    save_dataset(tmp_path / "d.bin", ds)
    back = load_dataset(tmp_path / "d.bin")
    assert back.features.tobytes() == ds.features.tobytes()
    np.testing.assert_array_equal(back.labels, ds.labels)


@pytest.mark.parametrize("cfg", [
    PipelineConfig(),
    PipelineConfig(epsilon=1e-3, matfun=Sqrt(), forward="iterative", newton=NewtonConfig(7, "denman-beavers", "none")),
    PipelineConfig(epsilon=0.1 + 0.2, matfun=Log(), grad_scheme=SvdTruncated(3e-11), use_signed_sqrt=False),
    PipelineConfig(matfun=Power(1 / 3), grad_scheme=PassThrough(), use_l2=False),
])
def test_model_roundtrip(tmp_path, cfg):
    rng = np.random.default_rng(0)
    model = Model(projection=rng.standard_normal((5, 3)), weights=rng.standard_normal((4, 10)), config=cfg)
    save_model(tmp_path / "m.bin", model)
    back = load_model(tmp_path / "m.bin")
    assert back.config == cfg
    assert back.projection.tobytes() == model.projection.tobytes()
    assert back.weights.tobytes() == model.weights.tobytes()


@settings(max_examples=25, deadline=None)
@given(data=st.lists(st.floats(allow_nan=False, width=64), min_size=1, max_size=24))
def test_array_roundtrip_property(tmp_path_factory, data):
    path = tmp_path_factory.mktemp("prop") / "a.bin"
    arr = np.array(data).reshape(1, -1)
    write_container(path, [(RecordKind.PROJECTION, arr)])
    [(kind, back)] = read_container(path)
    assert kind == RecordKind.PROJECTION and back.tobytes() == arr.tobytes()


def test_corrupt_files(tmp_path):
    bad = tmp_path / "bad.bin"
    bad.write_bytes(b"NOTMAGIC")
    with pytest.raises(FormatError, match="magic"):
        load_dataset(bad)
    good = tmp_path / "good.bin"
    save_dataset(good, Dataset(np.zeros((2, 1, 1)), np.array([0, 1])))
    bad.write_bytes(good.read_bytes()[:-3])
    with pytest.raises(FormatError, match="truncated"):
        load_dataset(bad)
    with pytest.raises(FormatError, match="expected records"):
        load_model(good)
    with pytest.raises(FormatError, match="cannot read"):
        load_dataset(tmp_path / "missing.bin")
    bad.write_bytes(MAGIC + struct.pack("<I", 99))
    with pytest.raises(FormatError, match="unknown record kind"):
        read_container(bad)


def test_kv_parsing(tmp_path):
    text = "# comment\nepochs = 7  # trailing\n\nmatfun=sqrt\nlearning-rate = 0.5\nepochs=8\n"
    kv = parse_kv(text)
    assert kv == {"epochs": "8", "matfun": "sqrt", "learning_rate": "0.5"}
    with pytest.raises(ConfigurationError, match=":2:"):
        parse_kv("a=1\nbroken\n", source="f")
    p = tmp_path / "c.cfg"
    p.write_text(format_kv({"x": "1", "y": "two"}))
    assert read_kv_file(p) == {"x": "1", "y": "two"}
    with pytest.raises(ConfigurationError, match="cannot read"):
        read_kv_file(tmp_path / "nope.cfg")


def test_config_builders():
    cfg = PipelineConfig(epsilon=0.25, matfun=Sqrt())
    assert pipeline_from_kv(pipeline_to_kv(cfg)) == cfg
    assert pipeline_from_kv({"matfun": "log", "grad_scheme": "svd"}).matfun == Log()
    tc = train_config_from_kv({"epochs": "3", "momentum": "0.5", "dtype": "float32"})
    assert tc == TrainConfig(epochs=3, momentum=0.5, dtype="float32")
    spec = spec_from_kv({"data_burst_factor": "4", "data_classes": "3"})
    assert spec.burst_factor == 4.0 and spec.classes == 3
    with pytest.raises(ConfigurationError):
        pipeline_from_kv({"signed_sqrt": "maybe"})
    with pytest.raises(ConfigurationError):
        train_config_from_kv({"epochs": "many"})
    with pytest.raises(ConfigurationError):
        pipeline_from_kv({"matfun": "log", "grad_scheme": "lyapunov"})


def test_manifest(tmp_path):
    path = tmp_path / "run.json"
    write_manifest(path, RunManifest(command="train", config={"a": 1}, seed=3, version="0.1.0", outputs=["m.bin"]))
    data = json.loads(path.read_text())
    assert data["command"] == "train" and data["seed"] == 3 and data["outputs"] == ["m.bin"]
    assert data["timestamp"].endswith("+00:00")
