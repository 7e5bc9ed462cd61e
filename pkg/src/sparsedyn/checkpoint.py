"""Versioned binary checkpoint container.

Layout (little endian)::

    magic   8 bytes  b"SPDYNCKP"
    version u16
    config  u32 length + UTF-8 JSON (sorted keys)
    count   u32
    blob *  u16 name length, name, u8 ndim, u32 dims..., u64 byte length,
            float64 payload, u32 crc32(payload)
    crc32   u32 over every preceding byte
"""
from __future__ import annotations

import json
import os
import struct
import zlib
from dataclasses import dataclass, field

import numpy as np

from .errors import CheckpointError
from .tensor import AdamState

MAGIC = b"SPDYNCKP"
VERSION = 1


@dataclass
class Checkpoint:
    config: dict
    params: dict[str, np.ndarray]
    adam: AdamState
    epoch: int = 0
    rng_state: dict = field(default_factory=dict)


def to_bytes(ckpt: Checkpoint) -> bytes:
    meta = {
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "rng_state": ckpt.rng_state,
        "adam": {"lr": ckpt.adam.lr, "beta1": ckpt.adam.beta1, "beta2": ckpt.adam.beta2,
                 "eps": ckpt.adam.eps, "step": ckpt.adam.step},
        "param_order": list(ckpt.params),
    }
    blobs = [(f"param/{k}", v) for k, v in ckpt.params.items()]
    if ckpt.adam.m:
        names = list(ckpt.params)
        blobs += [(f"adam_m/{k}", m) for k, m in zip(names, ckpt.adam.m)]
        blobs += [(f"adam_v/{k}", v) for k, v in zip(names, ckpt.adam.v)]

    out = bytearray(MAGIC)
    out += struct.pack("<H", VERSION)
    text = json.dumps(meta, sort_keys=True).encode()
    out += struct.pack("<I", len(text)) + text
    out += struct.pack("<I", len(blobs))
    for name, arr in blobs:
        arr = np.require(np.asarray(arr, dtype="<f8"), requirements="C")
        raw = arr.tobytes()
        key = name.encode()
        out += struct.pack("<H", len(key)) + key
        out += struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape)
        out += struct.pack("<Q", len(raw)) + raw + struct.pack("<I", zlib.crc32(raw))
    out += struct.pack("<I", zlib.crc32(bytes(out)))
    return bytes(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointError("checkpoint is truncated")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def from_bytes(buf: bytes) -> Checkpoint:
    if buf[:len(MAGIC)] != MAGIC:
        raise CheckpointError("not a sparsedyn checkpoint (bad magic bytes)")
    r = _Reader(buf)
    r.take(len(MAGIC))
    (version,) = r.unpack("<H")
    if version != VERSION:
        raise CheckpointError(f"checkpoint version {version} is not supported (expected {VERSION})")
    if len(buf) < 4 or zlib.crc32(buf[:-4]) != struct.unpack("<I", buf[-4:])[0]:
        raise CheckpointError("checksum mismatch")
    (n,) = r.unpack("<I")
    meta = json.loads(r.take(n).decode())
    (count,) = r.unpack("<I")
    blobs = {}
    for _ in range(count):
        (klen,) = r.unpack("<H")
        name = r.take(klen).decode()
        (ndim,) = r.unpack("<B")
        shape = r.unpack(f"<{ndim}I") if ndim else ()
        (nbytes,) = r.unpack("<Q")
        raw = r.take(nbytes)
        (crc,) = r.unpack("<I")
        if zlib.crc32(raw) != crc:
            raise CheckpointError(f"checksum mismatch in blob {name}")
        blobs[name] = np.frombuffer(raw, dtype="<f8").reshape(shape).astype(np.float64)
    order = meta["param_order"]
    a = meta["adam"]
    adam = AdamState(lr=a["lr"], beta1=a["beta1"], beta2=a["beta2"], eps=a["eps"], step=a["step"])
    if order and f"adam_m/{order[0]}" in blobs:
        adam.m = [blobs[f"adam_m/{k}"] for k in order]
        adam.v = [blobs[f"adam_v/{k}"] for k in order]
    return Checkpoint(config=meta["config"], params={k: blobs[f"param/{k}"] for k in order},
                      adam=adam, epoch=meta["epoch"], rng_state=meta["rng_state"])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    with open(os.fspath(path), "wb") as fh:
        fh.write(to_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    with open(os.fspath(path), "rb") as fh:
        return from_bytes(fh.read())
