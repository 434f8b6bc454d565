"""Seed splitting.

Every independent unit of work (a chain, an n-grid point, a test-point
block) gets its own generator. Unit ``i`` under master seed ``s`` is seeded
with::

    splitmix64(s XOR (i * 0x9E3779B97F4A7C15 mod 2**64))

and the seed feeds numpy's PCG64 via ``default_rng``. Nested units apply the
rule repeatedly: ``derive(derive(s, i), j)``.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    z = (x + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive(master: int, index: int) -> int:
    return splitmix64((int(master) & MASK64) ^ ((int(index) * GOLDEN) & MASK64))


def generator(master: int, *path: int) -> np.random.Generator:
    seed = int(master) & MASK64
    for i in path:
        seed = derive(seed, i)
    return np.random.default_rng(seed)


def as_generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(int(rng) & MASK64)
