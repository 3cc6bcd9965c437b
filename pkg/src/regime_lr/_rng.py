"""Seeded random streams.

All randomness in the package flows through :func:`make_rng`, which builds a
PCG64 generator from a :class:`numpy.random.SeedSequence` whose entropy is the
user seed followed by integer stream keys (replication index, grid key, ...).
Streams built from different keys are statistically independent, so results
do not depend on the order in which work is scheduled.
"""

from __future__ import annotations

import struct

import numpy as np

RNG_ALGORITHM = "PCG64"

_MASK64 = (1 << 64) - 1


def make_rng(seed: int, *keys: int) -> np.random.Generator:
    if seed < 0:
        raise ValueError(f"seed must be non-negative, got {seed}")
    entropy = [int(seed) & _MASK64] + [int(k) & _MASK64 for k in keys]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def float_key(values) -> int:
    """Stable 64-bit key for a small vector of floats (used to seed per-alpha fits)."""
    arr = np.atleast_1d(np.asarray(values, dtype=np.float64))
    key = 1469598103934665603
    for word in struct.unpack(f"<{arr.size}Q", arr.tobytes()):
        key = ((key ^ word) * 1099511628211) & _MASK64
    return key
