"""Bit-exact binary checkpoints.

Byte layout (all integers little-endian):
    0:4   magic b"PSQ1"
    4:8   format version, uint32
    8:12  architecture tag, uint32 (0=frame, 1=ctc, 2=rnnt)
    12:16 feat dim, uint32
    16:20 hidden dim, uint32
    20:24 vocab size, uint32
    24:32 seed, uint64
    32:40 value count, uint64
    40:   values, float64 little-endian
"""

from __future__ import annotations

import hashlib
import struct
from pathlib import Path

import numpy as np

from .params import ARCHS, ModelDims, ModelParams

MAGIC = b"PSQ1"
VERSION = 1
_HEADER = struct.Struct("<4sIIIIIQQ")


def checkpoint_bytes(params: ModelParams, seed: int = 0) -> bytes:
    header = _HEADER.pack(MAGIC, VERSION, ARCHS.index(params.arch),
                          params.dims.feat, params.dims.hidden, params.dims.vocab,
                          seed, params.values.size)
    return header + params.values.astype("<f8").tobytes()


def save_checkpoint(path, params: ModelParams, seed: int = 0) -> None:
    Path(path).write_bytes(checkpoint_bytes(params, seed))


def load_checkpoint(path):
    """Returns (ModelParams, seed)."""
    raw = Path(path).read_bytes()
    magic, version, arch_tag, feat, hidden, vocab, seed, count = _HEADER.unpack_from(raw)
    if magic != MAGIC or version != VERSION:
        raise ValueError(f"not a version-{VERSION} checkpoint: {path}")
    values = np.frombuffer(raw, dtype="<f8", offset=_HEADER.size, count=count).copy()
    params = ModelParams(ARCHS[arch_tag], ModelDims(feat, hidden, vocab), values)
    return params, seed


def checksum(params: ModelParams) -> str:
    return hashlib.sha256(checkpoint_bytes(params)).hexdigest()
