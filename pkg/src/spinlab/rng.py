"""Counter-based random streams.

Every stream is a Philox generator keyed by (master seed, stream keys). Keys can
be integers or short string tags; strings are hashed with crc32 so the mapping
is stable across processes and Python versions.
"""
from __future__ import annotations

import zlib

import numpy as np


def _key(k) -> int:
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k)


def make_rng(seed: int, *keys) -> np.random.Generator:
    """Return an independent Philox stream for ``seed`` and ``keys``."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))
