"""Seedable counter-based random numbers.

The whole toolkit draws its randomness from a splitmix64 counter generator:
the k-th output of a stream with seed s is ``mix64(s + (k+1)*GOLDEN)`` where
``mix64`` is the splitmix64 finalizer and GOLDEN is 2^64 / phi rounded to odd.
Uniform doubles use the midpoint convention ``(v >> 11 + 0.5) * 2^-53`` so
they lie strictly inside (0, 1): exponential gaps are therefore never zero
and thinning labels never collide with a threshold at 0.

Replicate k of a batch with base seed s runs on the child seed
``child_seed(s, k) = mix64(s ^ ((k+1)*GOLDEN))``.

This module is the pure-Python reference; the jitted kernels re-implement
the same arithmetic and are tested for bit equality against it.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15

_TWO_NEG53 = 2.0 ** -53


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return (z ^ (z >> 31)) & MASK64


def child_seed(base_seed: int, k: int) -> int:
    """Deterministic 64-bit seed for replicate k of a batch."""
    return mix64((base_seed ^ ((k + 1) * GOLDEN)) & MASK64)


def to_unit(v: int) -> float:
    """Map a 64-bit word to a double strictly inside (0, 1)."""
    return ((v >> 11) + 0.5) * _TWO_NEG53


class SplitMix64:
    """Counter-based uniform stream; state advances by GOLDEN per draw."""

    def __init__(self, seed: int):
        self._s = seed & MASK64

    def next_word(self) -> int:
        self._s = (self._s + GOLDEN) & MASK64
        return mix64(self._s)

    def next_unit(self) -> float:
        return to_unit(self.next_word())
