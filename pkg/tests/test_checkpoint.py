import struct

import numpy as np
import pytest

from sparsedyn.checkpoint import MAGIC, Checkpoint, from_bytes, load_checkpoint, save_checkpoint, to_bytes
from sparsedyn.errors import CheckpointError
from sparsedyn.tensor import AdamState


def _ckpt(with_moments=True):
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5), "c": np.array(2.5)}
    adam = AdamState(lr=0.01, step=7)
    if with_moments:
        adam.m = [rng.normal(size=v.shape) for v in params.values()]
        adam.v = [rng.random(size=v.shape) for v in params.values()]
    return Checkpoint({"protocol": "inductive", "model": {"d": 4}}, params, adam, epoch=3,
                      rng_state={"seed": 9})


@pytest.mark.parametrize("moments", [True, False])
def test_round_trip_is_bitwise(tmp_path, moments):
    ck = _ckpt(moments)
    save_checkpoint(ck, tmp_path / "m.ckpt")
    back = load_checkpoint(tmp_path / "m.ckpt")
    assert back.config == ck.config and back.epoch == 3 and back.rng_state == {"seed": 9}
    assert list(back.params) == list(ck.params)
    for k in ck.params:
        assert back.params[k].shape == ck.params[k].shape
        assert back.params[k].tobytes() == ck.params[k].tobytes()
    assert back.adam.step == 7 and back.adam.lr == 0.01
    assert len(back.adam.m) == len(ck.adam.m)
    for x, y in zip(back.adam.m + back.adam.v, ck.adam.m + ck.adam.v):
        assert np.shape(x) == np.shape(y) and np.array_equal(x, y)
    assert to_bytes(back) == to_bytes(ck)


def test_flipped_byte_is_detected():
    buf = bytearray(to_bytes(_ckpt()))
    buf[len(buf) // 2] ^= 0xFF
    with pytest.raises(CheckpointError, match="checksum mismatch"):
        from_bytes(bytes(buf))


def test_version_mismatch_names_both_versions():
    buf = bytearray(to_bytes(_ckpt()))
    buf[len(MAGIC):len(MAGIC) + 2] = struct.pack("<H", 9)
    with pytest.raises(CheckpointError, match=r"version 9.*expected 1"):
        from_bytes(bytes(buf))


def test_bad_magic_and_truncation():
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"NOTACKPT" + bytes(10))
    with pytest.raises(CheckpointError):
        from_bytes(to_bytes(_ckpt())[:20])
