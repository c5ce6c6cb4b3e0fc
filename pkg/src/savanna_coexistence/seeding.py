"""Seed splitting.

Every replica draws from its own ``numpy.random.Generator`` seeded by
``task_seed(master, grid_index, replica)``. The mix is the splitmix64
finaliser applied to the three inputs in turn, so seeds depend only on the
task's coordinates and never on execution order or worker count.

    z = master
    for v in (grid_index, replica):
        z = mix64(z ^ mix64(v + GOLDEN))
    seed = z

``mix64`` is splitmix64's output function: add the golden-ratio increment,
then two xor-shift-multiply rounds with the constants 0xBF58476D1CE4E5B9 and
0x94D049BB133111EB, all modulo 2**64.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15


def mix64(value: int) -> int:
    z = (value + GOLDEN) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def task_seed(master: int, grid_index: int, replica: int) -> int:
    z = master & MASK64
    for v in (grid_index, replica):
        z = mix64(z ^ mix64((v + GOLDEN) & MASK64))
    return z


def rng_for(master: int, grid_index: int = 0, replica: int = 0) -> np.random.Generator:
    return np.random.default_rng(task_seed(master, grid_index, replica))


def as_generator(seed: int | np.random.Generator) -> np.random.Generator:
    """Accept either a ready generator or an integer seed."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)
