"""Versioned binary checkpoint container.

Layout (all integers and floats little-endian)::

    8s   magic  b"CMPSCORE"
    u32  format version
    u32  number of entries in layer_dims, then that many u32
    u8   activation code, u8 has-optimiser flag
    u64  optimiser step count
    4f8  learning_rate, beta1, beta2, epsilon_num
    u32  metadata length, then UTF-8 JSON metadata
    f8[] parameter blocks W0, b0, W1, b1, ... (row-major)
    f8[] Adam first moments, then second moments (same order), if present
    u32  CRC-32 of everything above
"""
from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .model import ACTIVATIONS, ScoringModel
from .optim import AdamState

MAGIC = b"CMPSCORE"
FORMAT_VERSION = 1


class CheckpointFormatError(ValueError):
    pass


def _blocks(arrays) -> bytes:
    return b"".join(np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays)


def serialize(
    model: ScoringModel, state: AdamState | None = None, metadata: dict | None = None
) -> bytes:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    dims = model.layer_dims
    out = [
        struct.pack("<8sII", MAGIC, FORMAT_VERSION, len(dims)),
        struct.pack(f"<{len(dims)}I", *dims),
        struct.pack("<BB", ACTIVATIONS.index(model.activation), state is not None),
    ]
    if state is None:
        out.append(struct.pack("<Q4d", 0, 0.0, 0.0, 0.0, 0.0))
    else:
        out.append(struct.pack(
            "<Q4d", state.step, state.learning_rate, state.beta1, state.beta2,
            state.epsilon_num,
        ))
    out.append(struct.pack("<I", len(meta)))
    out.append(meta)
    out.append(_blocks(model.parameters()))
    if state is not None:
        out.append(_blocks(state.m))
        out.append(_blocks(state.v))
    body = b"".join(out)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointFormatError("truncated checkpoint stream")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def arrays(self, shapes) -> list[np.ndarray]:
        out = []
        for shape in shapes:
            count = int(np.prod(shape))
            buf = self.take(8 * count)
            out.append(np.frombuffer(buf, dtype="<f8").astype(np.float64).reshape(shape))
        return out


def deserialize(data: bytes) -> tuple[ScoringModel, AdamState | None, dict]:
    """Inverse of :func:`serialize`.

    Raises
    ------
    CheckpointFormatError
        Bad magic, unsupported version, truncation or checksum mismatch.
    """
    if len(data) < 12:
        raise CheckpointFormatError("truncated checkpoint stream")
    reader = _Reader(data)
    magic, version, n_dims = reader.unpack("<8sII")
    if magic != MAGIC:
        raise CheckpointFormatError("not a checkpoint file (bad magic bytes)")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"unsupported checkpoint version {version} (expected {FORMAT_VERSION})"
        )
    if len(data) < 4 or struct.unpack("<I", data[-4:])[0] != zlib.crc32(data[:-4]):
        raise CheckpointFormatError("checkpoint checksum mismatch (corrupt or truncated)")
    if not 2 <= n_dims <= 64:
        raise CheckpointFormatError(f"implausible layer count {n_dims}")
    dims = reader.unpack(f"<{n_dims}I")
    act_code, has_state = reader.unpack("<BB")
    if act_code >= len(ACTIVATIONS):
        raise CheckpointFormatError(f"unknown activation code {act_code}")
    step, lr, b1, b2, eps = reader.unpack("<Q4d")
    (meta_len,) = reader.unpack("<I")
    metadata = json.loads(reader.take(meta_len).decode("utf-8"))

    shapes = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        shapes.extend([(fan_out, fan_in), (fan_out,)])
    params = reader.arrays(shapes)
    model = ScoringModel(dims, params[0::2], params[1::2], ACTIVATIONS[act_code])
    state = None
    if has_state:
        m = reader.arrays(shapes)
        v = reader.arrays(shapes)
        state = AdamState(lr, b1, b2, eps, int(step), m, v)
    if reader.pos != len(data) - 4:
        raise CheckpointFormatError("trailing bytes in checkpoint stream")
    return model, state, metadata


def save_checkpoint(path, model, state=None, metadata=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(serialize(model, state, metadata))
    tmp.replace(path)
    return path


def load_checkpoint(path) -> tuple[ScoringModel, AdamState | None, dict]:
    return deserialize(Path(path).read_bytes())
