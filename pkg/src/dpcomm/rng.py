"""Seedable, portable randomness for the mechanisms.

All noise in this package is derived from a counter-based SplitMix64
stream: draw ``i`` of seed ``s`` mixes the 64-bit state ``s + (i+1)*GOLDEN``.
Because each draw is a pure function of ``(seed, index)``, sampling is
vectorizable with numpy, identical across processes, and reproducible in
other languages (the browser client reimplements the same stream with
BigInt arithmetic, validated against shared golden vectors).

Production callers pass ``seed=None`` and get an OS-entropy seed; tests and
illustrations pin seeds. Generated seeds stay below 2**53 so they survive a
round trip through JSON numbers.
"""

from __future__ import annotations

import secrets

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1

MAX_JSON_SAFE_SEED = (1 << 53) - 1


def fresh_seed() -> int:
    """OS-entropy seed, kept within the JSON-safe integer range."""
    return secrets.randbits(53)


def normalize_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise TypeError(f"seed must be an integer, got {seed!r}")
    return seed & _MASK


def raw64(seed: int, count: int, start: int = 0) -> np.ndarray:
    """SplitMix64 outputs for draw indices ``start .. start+count-1``."""
    seed = normalize_seed(seed)
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    z = np.uint64(seed) + idx * _GOLDEN
    z ^= z >> np.uint64(30)
    z *= _MIX1
    z ^= z >> np.uint64(27)
    z *= _MIX2
    z ^= z >> np.uint64(31)
    return z


def uniforms(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Uniform doubles in the open interval (0, 1).

    The top 53 bits of each 64-bit word are centered with a half-step so the
    result can never be exactly 0 or 1 (keeps log transforms finite).
    """
    bits = raw64(seed, count, start)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
