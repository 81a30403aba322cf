"""Deterministic 64-bit PRNG (splitmix64) shared by the engine, agents and harness.

splitmix64 is a bijective mix of a 64-bit counter, so nearby seeds give
independent-looking streams and the generator is trivial to port: every
transcript produced with a given seed is reproducible byte-for-byte on any
platform.
"""

from __future__ import annotations

MASK64 = (1 << 64) - 1

_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB


class SplitMix64:
    """splitmix64 generator; state is a single 64-bit integer."""

    __slots__ = ("state",)

    def __init__(self, seed: int) -> None:
        self.state = seed & MASK64

    def next_u64(self) -> int:
        """Advance the state and return the next 64-bit output."""
        self.state = (self.state + _GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * _MIX1) & MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & MASK64
        return (z ^ (z >> 31)) & MASK64

    def below(self, n: int) -> int:
        """Uniform integer in [0, n) by next-output mod n."""
        if n <= 0:
            raise ValueError(f"below() needs n >= 1, got {n}")
        return self.next_u64() % n

    def uniform(self) -> float:
        """Uniform float in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (2.0 ** -53)


def mix64(x: int) -> int:
    """First output of a splitmix64 generator seeded with ``x``."""
    return SplitMix64(x).next_u64()


def substream_seed(master_seed: int, stream_index: int) -> int:
    """Derive an independent sub-stream seed: splitmix64(master XOR index)."""
    return mix64((master_seed ^ stream_index) & MASK64)
