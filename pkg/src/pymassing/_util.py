from typing import Iterable

import numpy as np


def derive_seed(master: int, *path: int) -> int:
    """
    Derives an independent 64 bit seed from a master seed and an index path.
    The same (master, path) always yields the same seed.
    """
    sequence = np.random.SeedSequence([int(master) & 0xFFFFFFFFFFFFFFFF, *[int(p) for p in path]])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def rng(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng(derive_seed(seed, *path))


def chunks(items: list, size: int) -> Iterable[list]:
    for start in range(0, len(items), size):
        yield items[start : start + size]
