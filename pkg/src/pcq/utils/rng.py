"""
Seeded randomness.

SplitMix64 derives independent 64-bit seeds (one per stream, frame or class);
the draws themselves come from numpy's PCG64 generator seeded with them.
"""

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN_GAMMA = 0x9E3779B97F4A7C15
MIX_1 = 0xBF58476D1CE4E5B9
MIX_2 = 0x94D049BB133111EB


class SplitMix64:
    def __init__(self, seed: int):
        self.state = seed & MASK64

    def next(self) -> int:
        self.state = (self.state + GOLDEN_GAMMA) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * MIX_1) & MASK64
        z = ((z ^ (z >> 27)) * MIX_2) & MASK64
        return z ^ (z >> 31)


def derive_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th sub-stream of ``seed`` (index 0 is the first draw)."""
    mixer = SplitMix64(seed)
    mixer.state = (mixer.state + index * GOLDEN_GAMMA) & MASK64
    return mixer.next()


def make_generator(seed: int, index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(derive_seed(seed, index)))
