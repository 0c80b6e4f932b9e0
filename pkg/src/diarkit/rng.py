"""Deterministic random streams keyed by stable strings.

Each stream is a splitmix64 walk seeded from a SHA-256 hash of its key
parts. Streams with different keys are independent, so per-session or
per-batch draws never perturb each other, and the same key always
replays the same sequence on every platform.
"""

from __future__ import annotations

import hashlib

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15


class KeyedRng:
    """Sequential generator whose output is a pure function of its key."""

    def __init__(self, *key_parts: object):
        material = "\x1f".join(str(p) for p in key_parts)
        digest = hashlib.sha256(material.encode("utf-8")).digest()
        self._state = int.from_bytes(digest[:8], "little")

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def uniform(self, lo: float = 0.0, hi: float = 1.0) -> float:
        """Uniform double in [lo, hi)."""
        u = (self.next_u64() >> 11) * 2.0**-53
        return lo + (hi - lo) * u

    def randint(self, n: int) -> int:
        """Uniform integer in [0, n)."""
        if n <= 0:
            raise ValueError(f"randint needs n > 0, got {n}")
        return (self.next_u64() * n) >> 64

    def choice(self, seq):
        return seq[self.randint(len(seq))]
