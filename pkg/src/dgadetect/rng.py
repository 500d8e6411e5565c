"""Seeded, fully specified randomness for data operations.

Splits, shuffles, and downsampling must reproduce bit-for-bit across runs
and platforms, so they avoid library RNGs entirely: the generator below is
splitmix64 (a published 64-bit mixing function) driving Fisher-Yates and
Lemire bounded sampling, all in plain integer arithmetic.

Model-weight initialization does not need cross-implementation stability
and uses numpy's seeded Generator instead.
"""

from __future__ import annotations

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def _mix(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK64
    return h


class SplitMix64:
    """splitmix64 stream; state advances by the golden-ratio increment."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GOLDEN) & _MASK64
        return _mix(self._state)

    def below(self, n: int) -> int:
        """Integer in [0, n) via Lemire's multiply-shift reduction."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return (self.next_u64() * n) >> 64

    def uniform(self) -> float:
        """Float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]

    def sample_indices(self, n: int, k: int) -> list[int]:
        """k distinct indices from range(n), in draw order."""
        if k > n:
            raise ValueError(f"cannot sample {k} from {n}")
        pool = list(range(n))
        for i in range(k):
            j = i + self.below(n - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def derive(self, label: str) -> "SplitMix64":
        """Independent child stream keyed by a purpose label."""
        return SplitMix64(_mix(self._state ^ _fnv1a(label)))


def derive_seed(seed: int, label: str) -> int:
    """Stable 64-bit sub-seed for a named purpose."""
    return _mix((seed & _MASK64) ^ _fnv1a(label))
