"""Versioned binary policy checkpoints.

Layout (little-endian throughout):
  magic 'MMPC' | u32 version | u32 config-JSON length | config JSON |
  u32 tensor count | per tensor: u16 name length, name, u8 ndim,
  u32 dims..., float32 data | u32 CRC32 of everything before it.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from pathlib import Path

import numpy as np
import torch

from .config import PolicyConfig
from .model import Policy, build_policy

MAGIC = b"MMPC"
VERSION = 1


class CheckpointError(Exception):
    """Base class for checkpoint load failures."""


class CorruptFile(CheckpointError):
    """Truncated, mangled, or checksum-failing checkpoint."""


class VersionMismatch(CheckpointError):
    """The checkpoint's format version is not supported."""


def checkpoint_bytes(model: Policy) -> bytes:
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", VERSION))
    config_json = json.dumps(
        model.config.to_dict(), sort_keys=True, separators=(",", ":")
    ).encode()
    buf.write(struct.pack("<I", len(config_json)))
    buf.write(config_json)
    state = model.state_dict()
    buf.write(struct.pack("<I", len(state)))
    for name, tensor in state.items():
        encoded = name.encode()
        buf.write(struct.pack("<H", len(encoded)))
        buf.write(encoded)
        array = tensor.detach().to(torch.float32).numpy()
        buf.write(struct.pack("<B", array.ndim))
        for dim in array.shape:
            buf.write(struct.pack("<I", dim))
        buf.write(array.astype("<f4").tobytes())
    payload = buf.getvalue()
    return payload + struct.pack("<I", zlib.crc32(payload))


def save_checkpoint(model: Policy, path: str | Path) -> None:
    """Atomic write: temp file then rename."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(checkpoint_bytes(model))
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def read(self, n: int) -> bytes:
        if self.offset + n > len(self.data):
            raise CorruptFile("unexpected end of checkpoint")
        chunk = self.data[self.offset : self.offset + n]
        self.offset += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.read(struct.calcsize(fmt)))


def load_checkpoint_bytes(data: bytes) -> Policy:
    if len(data) < len(MAGIC) + 12:
        raise CorruptFile("checkpoint too short")
    payload, (stored_crc,) = data[:-4], struct.unpack("<I", data[-4:])
    if zlib.crc32(payload) != stored_crc:
        raise CorruptFile("checksum mismatch")
    reader = _Reader(payload)
    if reader.read(4) != MAGIC:
        raise CorruptFile("bad magic")
    (version,) = reader.unpack("<I")
    if version != VERSION:
        raise VersionMismatch(f"unsupported checkpoint version {version}")
    (config_len,) = reader.unpack("<I")
    try:
        config = PolicyConfig.from_dict(json.loads(reader.read(config_len)))
    except (ValueError, TypeError) as bad:
        raise CorruptFile(f"bad config block: {bad}") from bad

    model = build_policy(config)
    state = model.state_dict()
    (tensor_count,) = reader.unpack("<I")
    if tensor_count != len(state):
        raise CorruptFile(
            f"expected {len(state)} tensors, file has {tensor_count}"
        )
    loaded = {}
    for _ in range(tensor_count):
        (name_len,) = reader.unpack("<H")
        name = reader.read(name_len).decode()
        if name not in state:
            raise CorruptFile(f"unknown tensor {name!r}")
        (ndim,) = reader.unpack("<B")
        shape = tuple(reader.unpack("<I")[0] for _ in range(ndim))
        if shape != tuple(state[name].shape):
            raise CorruptFile(
                f"tensor {name!r} shape {shape} != expected {tuple(state[name].shape)}"
            )
        count = int(np.prod(shape)) if shape else 1
        array = np.frombuffer(reader.read(4 * count), dtype="<f4").reshape(shape)
        loaded[name] = torch.from_numpy(array.copy())
    if reader.offset != len(payload):
        raise CorruptFile("trailing bytes after tensor data")
    if not all(torch.isfinite(t).all() for t in loaded.values()):
        raise CorruptFile("non-finite tensor values")
    model.load_state_dict(loaded)
    model.eval()
    return model


def load_checkpoint(path: str | Path) -> Policy:
    return load_checkpoint_bytes(Path(path).read_bytes())


def checkpoint_fingerprint(path: str | Path) -> str:
    """Stable hex id of a checkpoint file's contents."""
    return f"{zlib.crc32(Path(path).read_bytes()):08x}"
