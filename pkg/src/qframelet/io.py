"""Binary coefficient dumps (``QFC1``) and model checkpoints (``QFM1``).

All integers are little-endian int32/uint32 and all tensors little-endian
float64 in row-major order.

QFC1: magic, then N, d, K, L as int32, then the ``1 + K*(L+1)`` blocks of
shape N x d in canonical order.

QFM1: magic, uint32 length + UTF-8 JSON metadata, uint32 tensor count, then
for each tensor: uint32 name length, UTF-8 name, uint32 ndim, ndim uint32
dims, float64 data.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import LoadError
from .exact import FrameletCoefficients, block_count

COEFF_MAGIC = b"QFC1"
MODEL_MAGIC = b"QFM1"
_F64 = np.dtype("<f8")


def save_coefficients(path: str | Path, coeffs: FrameletCoefficients) -> None:
    b, n, d = coeffs.data.shape
    with Path(path).open("wb") as fh:
        fh.write(COEFF_MAGIC)
        fh.write(struct.pack("<4i", n, d, coeffs.K, coeffs.levels))
        fh.write(np.ascontiguousarray(coeffs.data, dtype=_F64).tobytes())


def load_coefficients(path: str | Path) -> FrameletCoefficients:
    raw = Path(path).read_bytes()
    if raw[:4] != COEFF_MAGIC:
        raise LoadError(f"{path}: not a QFC1 coefficient file")
    if len(raw) < 20:
        raise LoadError(f"{path}: truncated header")
    n, d, K, L = struct.unpack("<4i", raw[4:20])
    b = block_count(K, L)
    expected = 20 + b * n * d * 8
    if len(raw) != expected:
        raise LoadError(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype=_F64, offset=20).reshape(b, n, d).astype(float)
    return FrameletCoefficients(K, L, data)


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray], metadata: dict | None = None) -> None:
    meta = json.dumps(metadata or {}, sort_keys=True).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        fh.write(struct.pack("<I", len(tensors)))
        for name, arr in tensors.items():
            arr = np.asarray(arr, dtype=_F64)
            key = name.encode("utf-8")
            fh.write(struct.pack("<I", len(key)))
            fh.write(key)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr).tobytes())


def load_tensors(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    raw = Path(path).read_bytes()
    if raw[:4] != MODEL_MAGIC:
        raise LoadError(f"{path}: not a QFM1 checkpoint")
    pos = 4

    def take(fmt):
        nonlocal pos
        size = struct.calcsize(fmt)
        if pos + size > len(raw):
            raise LoadError(f"{path}: truncated checkpoint")
        out = struct.unpack(fmt, raw[pos:pos + size])
        pos += size
        return out

    (meta_len,) = take("<I")
    metadata = json.loads(raw[pos:pos + meta_len].decode("utf-8"))
    pos += meta_len
    (count,) = take("<I")
    tensors = {}
    for _ in range(count):
        (name_len,) = take("<I")
        name = raw[pos:pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = take("<I")
        shape = take(f"<{ndim}I") if ndim else ()
        nbytes = int(np.prod(shape, dtype=np.int64)) * 8
        if pos + nbytes > len(raw):
            raise LoadError(f"{path}: truncated tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=_F64, count=nbytes // 8, offset=pos).reshape(shape).astype(float)
        pos += nbytes
    if pos != len(raw):
        raise LoadError(f"{path}: {len(raw) - pos} trailing bytes")
    return tensors, metadata


def save_model(path: str | Path, model, metadata: dict | None = None) -> None:
    """Write ``model.parameters()`` in declaration order."""
    save_tensors(path, model.parameters(), metadata)


def load_model_into(path: str | Path, model) -> dict:
    """Copy checkpoint tensors into ``model`` (shapes must match); returns metadata."""
    tensors, metadata = load_tensors(path)
    params = model.parameters()
    if list(tensors) != list(params):
        raise LoadError(f"{path}: tensor names do not match the model")
    for name, arr in tensors.items():
        if params[name].shape != arr.shape:
            raise LoadError(f"{path}: {name} has shape {arr.shape}, expected {params[name].shape}")
        params[name][...] = arr
    return metadata
