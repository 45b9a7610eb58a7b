"""Counter-based seed derivation.

Trial and machine streams are keyed by ``derive_seed(parent, index)`` and fed
to a Philox generator, so a stream depends only on its position in the
experiment tree and never on scheduling.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def derive_seed(parent: int, index: int) -> int:
    return _splitmix64(_splitmix64(int(parent) & MASK64) ^ (int(index) & MASK64))


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=int(seed) & MASK64))
