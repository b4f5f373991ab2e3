"""Portable deterministic randomness for splits and minibatch shuffles.

Split assignments and training trajectories must be reproducible from the
documented recipe alone, independent of Python/numpy versions and of the
platform, so the generator is pinned here instead of delegating to a
library RNG: splitmix64 for the stream, multiply-shift for bounded draws,
backward Fisher-Yates for shuffles. FORMATS.md carries the normative
definitions; this module is the reference implementation.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1


def fnv1a64(data: bytes) -> int:
    """FNV-1a 64-bit hash, used to derive substream seeds from string keys."""
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


class SplitMix64:
    """splitmix64 generator (Steele, Lea, Flood 2014 mixing constants)."""

    __slots__ = ("_state",)

    def __init__(self, seed: int) -> None:
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + 0x9E3779B97F4A7C15) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
        return z ^ (z >> 31)

    def below(self, n: int) -> int:
        """Draw an integer in [0, n) via the multiply-shift map.

        Deterministic and branch-free; the bias of at most n/2**64 is
        irrelevant here and keeps the recipe trivial to re-implement.
        """
        if n <= 0:
            raise ValueError("bound must be positive")
        return (self.next_u64() * n) >> 64

    def shuffle(self, items: list) -> None:
        """In-place backward Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def permutation(self, n: int) -> list[int]:
        out = list(range(n))
        self.shuffle(out)
        return out


def stream(seed: int, key: str) -> SplitMix64:
    """Independent generator for (seed, key).

    Used for per-stratum split shuffles and per-epoch minibatch orders so
    that streams do not depend on processing order elsewhere.
    """
    scrambled = SplitMix64(seed).next_u64()
    return SplitMix64(scrambled ^ fnv1a64(key.encode("utf-8")))
