"""Deterministic random numbers for every stage of the pipeline.

A single splitmix64 generator backs all sampling so that a fixed seed
gives bit-identical results on every platform. The state update is a
plain 64-bit add of the golden-ratio constant, which means the stream
can be jumped to any position in O(1) -- that is what makes per-scene
and per-puzzle seed derivation cheap.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def _finalize(z: int) -> int:
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def splitmix_next(state: int) -> tuple[int, int]:
    """One step of splitmix64: returns (new_state, output)."""
    state = (state + GOLDEN) & MASK64
    return state, _finalize(state)


def derive_seed(master_seed: int, index: int) -> int:
    """Seed for the index-th parallel stream under master_seed.

    Equal to the (index+1)-th splitmix output starting from master_seed;
    computed directly from the additive state recurrence.
    """
    state = (master_seed + ((index + 1) * GOLDEN)) & MASK64
    return _finalize(state)


class Rng:
    """Splitmix64 generator with the derivations used across the toolkit.

    Floats are (u64 >> 11) * 2**-53 in [0, 1); bounded integers are
    floor(float * k), never rejection loops, so the number of draws per
    call is fixed and replay-stable.
    """

    __slots__ = ("state",)

    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next_u64(self) -> int:
        self.state, out = splitmix_next(self.state)
        return out

    def next_float(self) -> float:
        return (self.next_u64() >> 11) * 2.0**-53

    def next_below(self, k: int) -> int:
        """Uniform integer in [0, k)."""
        if k <= 0:
            raise ValueError(f"k must be positive, got {k}")
        return int(self.next_float() * k)

    def next_int(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi], inclusive on both ends."""
        if hi < lo:
            raise ValueError(f"empty range [{lo}, {hi}]")
        return lo + self.next_below(hi - lo + 1)

    def fill_u64(self, n: int) -> np.ndarray:
        """Next n raw outputs as a uint64 array, identical to n next_u64 calls."""
        start = np.uint64(self.state)
        idx = np.arange(1, n + 1, dtype=np.uint64)
        z = start + idx * np.uint64(GOLDEN)  # array uint64 ops wrap mod 2**64
        z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        z = z ^ (z >> np.uint64(31))
        self.state = (self.state + n * GOLDEN) & MASK64
        return z

    def fill_floats(self, shape) -> np.ndarray:
        """float64 array of uniforms in [0, 1), row-major draw order."""
        n = int(np.prod(shape))
        u = self.fill_u64(n)
        out = (u >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return out.reshape(shape)

    def fill_uniform(self, shape, lo: float, hi: float) -> np.ndarray:
        return lo + (hi - lo) * self.fill_floats(shape)

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.next_below(i + 1)
            items[i], items[j] = items[j], items[i]
