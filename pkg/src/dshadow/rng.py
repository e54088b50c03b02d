"""Deterministic random streams.

Every stream is a Philox (counter-based) generator keyed by the user seed and
a tuple of integers naming the consumer, so independent tasks can draw in any
order or in parallel and still reproduce bit-for-bit.
"""

import numpy as np


def generator(seed: int, *keys: int) -> np.random.Generator:
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, keys)])
    return np.random.Generator(np.random.Philox(ss))
