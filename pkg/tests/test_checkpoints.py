import numpy as np
import pytest

from reembedqa.checkpoints import (CheckpointError, load_checkpoint,
                                   restore_into, save_checkpoint)
from reembedqa.tensor import Tensor


@pytest.fixture
def params(rng):
    return {
        "layer0.w": Tensor(rng.normal(size=(3, 4)).astype(np.float32), requires_grad=True),
        "layer0.b": Tensor(rng.normal(size=4).astype(np.float32), requires_grad=True),
        "emb": Tensor(rng.normal(size=(5, 2)).astype(np.float32), requires_grad=True),
    }


def test_round_trip_exact(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    loaded = load_checkpoint(path)
    assert list(loaded) == list(params)
    for name, p in params.items():
        assert loaded[name].dtype == np.float32
        assert np.array_equal(loaded[name], p.data)


def test_restore_into_overwrites_values(tmp_path, params, rng):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    fresh = {name: Tensor(rng.normal(size=p.shape).astype(np.float32), requires_grad=True)
             for name, p in params.items()}
    restore_into(fresh, load_checkpoint(path))
    for name in params:
        assert np.array_equal(fresh[name].data, params[name].data)


def test_bad_magic(tmp_path):
    path = tmp_path / "m.ckpt"
    path.write_bytes(b"NOTACKPT" + b"\x00" * 16)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)


def test_truncation_reports_byte_offset(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    blob = path.read_bytes()
    path.write_bytes(blob[:len(blob) - 7])
    with pytest.raises(CheckpointError, match="truncated.*byte"):
        load_checkpoint(path)


def test_trailing_garbage_rejected(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    path.write_bytes(path.read_bytes() + b"xx")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(path)


def test_restore_name_mismatch(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    wrong = {"other": Tensor(np.zeros(3), requires_grad=True)}
    with pytest.raises(CheckpointError, match="name mismatch"):
        restore_into(wrong, load_checkpoint(path))


def test_restore_shape_mismatch(tmp_path, params):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, params)
    wrong = {name: Tensor(np.zeros((1, 1)), requires_grad=True) for name in params}
    with pytest.raises(CheckpointError, match="shape"):
        restore_into(wrong, load_checkpoint(path))


def test_empty_checkpoint(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {})
    assert load_checkpoint(path) == {}


def test_accepts_plain_arrays(tmp_path):
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"a": np.arange(6, dtype=np.float64).reshape(2, 3)})
    loaded = load_checkpoint(path)
    assert loaded["a"].dtype == np.float32
    assert np.array_equal(loaded["a"], np.arange(6).reshape(2, 3))
