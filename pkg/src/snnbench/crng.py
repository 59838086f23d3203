"""Counter-based random number primitives.

Connectivity construction and external input generation must not depend on
how work is distributed over worker threads.  Instead of stateful streams,
randomness is derived by hashing (seed, entity, counter) tuples with a
splitmix64-style finalizer, so any worker can compute any draw directly.
"""

from __future__ import annotations

import numpy as np
from numba import njit

U64 = np.uint64

_M1 = U64(0xBF58476D1CE4E5B9)
_M2 = U64(0x94D049BB133111EB)
_GOLDEN = U64(0x9E3779B97F4A7C15)
# domain separation tags so distinct subsystems never share draws
TAG_EXTERNAL_INPUT = U64(0x243F6A8885A308D3)

_INV_2_53 = 1.0 / 9007199254740992.0  # 2**-53


@njit(cache=True, inline="always")
def mix64(x):
    """splitmix64 finalizer; bijective mixing of a 64-bit word."""
    x = U64(x)
    x = (x ^ (x >> U64(30))) * _M1
    x = (x ^ (x >> U64(27))) * _M2
    return x ^ (x >> U64(31))


@njit(cache=True, inline="always")
def hash3(seed, a, b):
    """Hash a (seed, a, b) tuple into a well-mixed 64-bit word."""
    h = mix64(U64(seed) + _GOLDEN)
    h = mix64(h ^ U64(a))
    h = mix64(h ^ (U64(b) + _GOLDEN))
    return h


@njit(cache=True, inline="always")
def to_unit(h):
    """Map a 64-bit word to a double in [0, 1)."""
    return np.float64(U64(h) >> U64(11)) * _INV_2_53


def mix64_array(x: np.ndarray) -> np.ndarray:
    """Vectorized twin of :func:`mix64` for oracle-style checks."""
    x = x.astype(np.uint64, copy=True)
    x = (x ^ (x >> U64(30))) * _M1
    x = (x ^ (x >> U64(27))) * _M2
    return x ^ (x >> U64(31))


def hash3_array(seed: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    h = mix64_array(np.uint64(seed) + _GOLDEN + np.zeros_like(a, dtype=np.uint64))
    h = mix64_array(h ^ a.astype(np.uint64))
    return mix64_array(h ^ (b.astype(np.uint64) + _GOLDEN))


def to_unit_array(h: np.ndarray) -> np.ndarray:
    return (h >> U64(11)).astype(np.float64) * _INV_2_53
