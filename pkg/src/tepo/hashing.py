"""Counter-based hashing primitives.

Everything here is plain 64-bit integer arithmetic (mod 2**64) so that any
implementation, in any language, reproduces the same streams without shared
PRNG state.
"""
from __future__ import annotations

import numpy as np

_M64 = (1 << 64) - 1

_GOLDEN = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def splitmix64(x: int) -> int:
    """Finalize a 64-bit key into a well-mixed 64-bit value."""
    x = (x + _GOLDEN) & _M64
    x = ((x ^ (x >> 30)) * _MIX1) & _M64
    x = ((x ^ (x >> 27)) * _MIX2) & _M64
    return x ^ (x >> 31)


def splitmix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized :func:`splitmix64` on a uint64 array."""
    x = x.astype(np.uint64, copy=True)
    x += np.uint64(_GOLDEN)
    x = (x ^ (x >> np.uint64(30))) * np.uint64(_MIX1)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(_MIX2)
    return x ^ (x >> np.uint64(31))


def fnv1a64(data: bytes) -> int:
    """FNV-1a over a byte string; order-sensitive and platform-independent."""
    h = _FNV_OFFSET
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _M64
    return h


def unit_float(x: int) -> float:
    """Map a 64-bit value to [0, 1) using the top 53 bits."""
    return (x >> 11) * 2.0**-53


def unit_float_array(x: np.ndarray) -> np.ndarray:
    return (x >> np.uint64(11)).astype(np.float64) * 2.0**-53
