"""Keyed, counter-based random streams.

Every stream is a Philox generator whose key is derived from ``(seed, name,
index)``.  Two streams with the same key always produce the same values, and
the order in which streams are created never matters.
"""
from __future__ import annotations

import zlib

import numpy as np


def _name_key(name: str) -> int:
    return zlib.crc32(name.encode("utf-8"))


def stream(seed: int, name: str, *index: int) -> np.random.Generator:
    """Return an independent generator keyed by ``(seed, name, *index)``."""
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(_name_key(name), *map(int, index)))
    return np.random.Generator(np.random.Philox(ss))
