import numpy as np
import pytest

from pymassing.errors import CheckpointError, StorageError
from pymassing.neural import checkpoint_hash, load_checkpoint, save_checkpoint
from pymassing.neural.checkpoint import MAGIC, decode_checkpoint, encode_checkpoint
from pymassing.neural.layers import AttentionConfig


def tensors() -> dict:
    rng = np.random.default_rng(0)
    return {"a.weight": rng.normal(size=(3, 2)), "a.bias": rng.normal(size=(2,)), "scalar": np.array(1.5)}


def test_round_trip_is_bit_exact(tmp_path):
    config = AttentionConfig(input_dim=5, model_dim=8, heads=2)
    save_checkpoint(tmp_path / "m.ckpt", "test", config, tensors())
    loaded_config, loaded = load_checkpoint(tmp_path / "m.ckpt", "test", AttentionConfig)
    assert loaded_config == config
    assert list(loaded) == list(tensors())
    for name, arr in tensors().items():
        np.testing.assert_array_equal(loaded[name], arr)
    assert checkpoint_hash(tmp_path / "m.ckpt") == checkpoint_hash(tmp_path / "m.ckpt")


def test_corrupt_checkpoints():
    config = AttentionConfig(input_dim=5, model_dim=8, heads=2)
    data = encode_checkpoint("test", config, tensors())
    assert data.startswith(MAGIC)
    with pytest.raises(CheckpointError):
        decode_checkpoint(b"NOTACKPT" + data[8:], "test", AttentionConfig)
    with pytest.raises(CheckpointError):
        decode_checkpoint(data, "other", AttentionConfig)
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:-8], "test", AttentionConfig)
    with pytest.raises(CheckpointError):
        decode_checkpoint(data + b"\0", "test", AttentionConfig)
    with pytest.raises(CheckpointError):
        decode_checkpoint(data[:8] + (2).to_bytes(4, "big") + data[12:], "test", AttentionConfig)


def test_missing_file(tmp_path):
    with pytest.raises(StorageError):
        load_checkpoint(tmp_path / "missing.ckpt", "test", AttentionConfig)
    with pytest.raises(StorageError):
        checkpoint_hash(tmp_path / "missing.ckpt")


def test_checkpoint_error_is_a_storage_error():
    assert issubclass(CheckpointError, StorageError)
