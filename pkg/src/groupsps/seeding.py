"""Splittable seed derivation.

Every random stream in a run is keyed by a path of non-negative integers
rooted at the master seed, so results never depend on execution order.
"""

import numpy as np


def derive_seed(root: int, *path: int) -> int:
    """64-bit seed for the stream at ``path`` below ``root``."""
    ss = np.random.SeedSequence(int(root), spawn_key=tuple(int(p) for p in path))
    return int(ss.generate_state(1, np.uint64)[0])


def rng_at(root: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(root, *path))
