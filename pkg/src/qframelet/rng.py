"""Named, counter-based random streams.

Every draw is keyed by ``(seed, purpose, *keys)`` and generated by numpy's
Philox counter-based bit generator seeded through ``SeedSequence``. Dropout,
noise and initialisation therefore never share state, and a matrix entry
drawn row by row depends only on (seed, purpose, row, column).

The algorithm choice is fixed: changing it changes every stored result.
"""
from __future__ import annotations

import zlib

import numpy as np


def purpose_id(purpose: str) -> int:
    return zlib.crc32(purpose.encode("utf-8"))


def stream(seed: int, purpose: str, *keys: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF, purpose_id(purpose)] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def keyed_uniform(seed: int, purpose: str, shape: tuple[int, int]) -> np.ndarray:
    """Uniform [0, 1) matrix whose row ``r`` comes from stream ``(seed, purpose, r)``."""
    rows, cols = shape
    out = np.empty((rows, cols))
    for r in range(rows):
        out[r] = stream(seed, purpose, r).random(cols)
    return out


def keyed_normal(seed: int, purpose: str, shape: tuple[int, int]) -> np.ndarray:
    """Standard normal matrix, keyed per row like :func:`keyed_uniform`."""
    rows, cols = shape
    out = np.empty((rows, cols))
    for r in range(rows):
        out[r] = stream(seed, purpose, r).standard_normal(cols)
    return out
