"""Seed derivation.

All randomness in a run descends from one root seed. Sub-seeds are derived
with splitmix64 so that per-component and per-sequence streams are
independent of each other and of iteration order:

    derive_seed(seed, "data", "ID", "train", 17)

String keys are folded in through CRC-32 (stable across processes, unlike
`hash()`).
"""

from __future__ import annotations

import zlib

import numpy as np

MASK64 = (1 << 64) - 1
_GOLDEN_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 step: a well-mixed 64-bit output for a 64-bit input."""
    z = (x + _GOLDEN_GAMMA) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int | str) -> int:
    """Fold `keys` into `seed`, one splitmix64 round per key."""
    state = splitmix64(seed & MASK64)
    for key in keys:
        value = zlib.crc32(key.encode("utf-8")) if isinstance(key, str) else key & MASK64
        state = splitmix64(state ^ value)
    return state


def rng_for(seed: int, *keys: int | str) -> np.random.Generator:
    """numpy Generator seeded from `derive_seed(seed, *keys)`."""
    return np.random.default_rng(derive_seed(seed, *keys))
