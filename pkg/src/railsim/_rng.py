"""Seeded generators.

Every random decision in the package draws from PCG64 seeded through
``numpy.random.SeedSequence`` with an integer entropy tuple, so a
``(seed, stream...)`` key gives the same numbers on every platform.
"""

import numpy as np


def make_rng(seed: int, *stream: int) -> np.random.Generator:
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(s) & 0xFFFFFFFFFFFFFFFF for s in stream]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))
