"""Counter-based deterministic random streams built on splitmix64.

Every stream is addressed by an integer key; drawing n values is a pure
function of (key, n), so per-sample generation parallelizes without any
shared state and reproduces bit-identically in any execution order.
"""

from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

_U64 = np.uint64
_INV_2_53 = float(2.0 ** -53)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _MIX1
    z = (z ^ (z >> _U64(27))) * _MIX2
    return z ^ (z >> _U64(31))


_MASK64 = (1 << 64) - 1


def _mix_int(z: int) -> int:
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def derive_key(*parts: int) -> int:
    """Fold integers into a single stream key (order-sensitive)."""
    key = 0
    for part in parts:
        key = _mix_int(key + (part & _MASK64) + int(GOLDEN))
    return key


def uint64_stream(key: int, n: int, offset: int = 0) -> np.ndarray:
    counters = (np.arange(offset + 1, offset + n + 1, dtype=np.uint64)
                * GOLDEN + _U64(key & 0xFFFFFFFFFFFFFFFF))
    return _mix(counters)


def uniform_stream(key: int, n: int, offset: int = 0) -> np.ndarray:
    """n doubles in [0, 1) from stream ``key``."""
    return (uint64_stream(key, n, offset) >> _U64(11)).astype(np.float64) * _INV_2_53


def normal_stream(key: int, n: int, offset: int = 0) -> np.ndarray:
    """n standard-normal doubles via Box-Muller on stream ``key``."""
    pairs = (n + 1) // 2
    u = uniform_stream(key, 2 * pairs, offset)
    u1 = u[:pairs] + _INV_2_53  # keep log() argument strictly positive
    u2 = u[pairs:]
    r = np.sqrt(-2.0 * np.log(u1))
    theta = 2.0 * np.pi * u2
    out = np.empty(2 * pairs)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:n]
