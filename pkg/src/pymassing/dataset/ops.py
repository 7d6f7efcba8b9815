from logging import getLogger
from typing import List, Sequence, Tuple, TypeVar

import msgspec
import numpy as np

import pymassing._util
from pymassing.dataset.records import SequenceRecord
from pymassing.gym.env import MAX_STEPS, measure_state
from pymassing.voxel import DesignState

logger = getLogger(__name__)

T = TypeVar("T")


class Bucket(msgspec.Struct, frozen=True, array_like=True):
    low: float
    high: float
    count: int


def split(dataset: Sequence[T], train_fraction: float, seed: int) -> Tuple[List[T], List[T]]:
    """
    Seeded shuffle, then the first round(n * fraction) items become the training split.
    """
    if not 0 < train_fraction < 1:
        raise ValueError(f"Train fraction must be in (0, 1), got {train_fraction}")
    order = pymassing._util.rng(seed, 2).permutation(len(dataset))
    n_train = int(round(len(dataset) * train_fraction))
    return [dataset[i] for i in order[:n_train]], [dataset[i] for i in order[n_train:]]


def bucket_counts(values: Sequence[float], width: float, upper: float) -> List[Bucket]:
    """
    Counts per fixed width bucket over [0, upper), values beyond upper land in the last bucket.
    """
    n_buckets = max(int(np.ceil(upper / width)), 1)
    counts = np.zeros(n_buckets, dtype=np.int64)
    for v in values:
        counts[min(int(v // width), n_buckets - 1)] += 1
    return [Bucket(low=i * width, high=(i + 1) * width, count=int(c)) for i, c in enumerate(counts)]


def length_histogram(dataset: Sequence[SequenceRecord], width: int = 50, upper: int = MAX_STEPS + 1) -> List[Bucket]:
    return bucket_counts([r.raw_len for r in dataset], width, upper)


def far_histogram(final_states: Sequence[DesignState], width: float = 0.25, upper: float = 6.0) -> List[Bucket]:
    return bucket_counts([measure_state(s).far_so_far for s in final_states], width, upper)


def rooms_per_floor_histogram(final_states: Sequence[DesignState], width: int = 5, upper: int = 101) -> List[Bucket]:
    """
    Occupied voxels per used floor, every floor with at least one room counts once.
    """
    values: List[int] = []
    for state in final_states:
        per_floor = np.count_nonzero(state.rooms, axis=(0, 1))
        values.extend(int(c) for c in per_floor if c > 0)
    return bucket_counts(values, width, upper)
