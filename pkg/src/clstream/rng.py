"""Portable seeded randomness.

All shuffles and synthetic draws in clstream go through :class:`SplitMix64`,
a fully specified 64-bit generator (Steele, Lea & Flood, 2014), so that an
ordering produced here can be reproduced bit-for-bit by any other
implementation that follows the same recipe:

* ``next_u64``: ``state += 0x9E3779B97F4A7C15`` then the SplitMix64 finalizer.
* ``below(n)``: rejection sampling on ``next_u64`` for an unbiased draw in
  ``[0, n)``.
* ``shuffle``: Fisher-Yates from the last position down, ``j = below(i + 1)``.
* ``uniform``: top 53 bits scaled to ``[0, 1)``.
* ``normal``: Box-Muller, using the cosine branch only.
"""

from __future__ import annotations

import math
from typing import MutableSequence, TypeVar

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15

T = TypeVar("T")


def mix64(z: int) -> int:
    """SplitMix64 output finalizer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, *keys: int) -> int:
    """Fold integer keys into a seed to get an independent sub-stream seed.

    ``derive_seed(s, a, b)`` is defined as ``mix64(mix64(s ^ mix64(a + G)) ^
    mix64(b + G))`` and so on, with ``G`` the golden gamma.
    """
    h = check_seed(seed)
    for key in keys:
        if key < 0:
            raise ValueError(f"derivation keys must be non-negative, got {key}")
        h = mix64(h ^ mix64(key + GOLDEN_GAMMA))
    return h


def check_seed(seed: int) -> int:
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise TypeError(f"seed must be an int, got {type(seed).__name__}")
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


class SplitMix64:
    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = check_seed(seed)

    def next_u64(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        return mix64(self.state)

    def below(self, bound: int) -> int:
        if bound <= 0:
            raise ValueError("bound must be positive")
        # largest multiple of bound representable in 64 bits
        limit = (1 << 64) - ((1 << 64) % bound)
        while True:
            r = self.next_u64()
            if r < limit:
                return r % bound

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * (1.0 / (1 << 53))

    def normal(self) -> float:
        u1 = 1.0 - self.uniform()  # (0, 1]
        u2 = self.uniform()
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def shuffle(self, items: MutableSequence[T]) -> None:
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]


def permutation(seed: int, n: int) -> list[int]:
    """Seeded Fisher-Yates permutation of ``range(n)``."""
    order = list(range(n))
    SplitMix64(seed).shuffle(order)
    return order
