from logging import getLogger
from typing import Dict, Tuple

import msgspec
import numpy as np

import pymassing._util
from pymassing.errors import ConstraintError
from pymassing.voxel import GridPartition, RoomType

logger = getLogger(__name__)

NON_OFFICE_ROOMS: Tuple[RoomType, ...] = (
    RoomType.ELEVATOR,
    RoomType.STAIRS,
    RoomType.MECHANICAL,
    RoomType.RESTROOM,
    RoomType.CORRIDOR,
    RoomType.LOBBY,
)


class EpisodeConstraints(msgspec.Struct, frozen=True):
    """
    One design problem: the floor area ratio to reach and the target program ratio per room type.
    The seed also determines the partition of the episode.
    """

    far_target: float
    tpr_targets: Dict[RoomType, float]
    seed: int

    def __post_init__(self) -> None:
        if not self.far_target > 0:
            raise ConstraintError(f"FAR target must be positive, got {self.far_target}")
        if RoomType.EMPTY in self.tpr_targets:
            raise ConstraintError("Target program ratio can not contain empty rooms")
        if any(not r >= 0 for r in self.tpr_targets.values()):
            raise ConstraintError(f"Target program ratios must be non negative: {self.tpr_targets}")
        if abs(sum(self.tpr_targets.values()) - 1.0) > 1e-9:
            raise ConstraintError(f"Target program ratios must sum to 1, got {sum(self.tpr_targets.values())}")
        if not 0 <= self.seed < 2**64:
            raise ConstraintError(f"Seed must be a 64 bit unsigned integer, got {self.seed}")

    @property
    def office_share(self) -> float:
        return self.tpr_targets.get(RoomType.OFFICE, 0.0)


class ConstraintRanges(msgspec.Struct, frozen=True):
    far: Tuple[float, float] = (1.0, 5.0)
    office_share: Tuple[float, float] = (0.6, 0.85)


class PartitionRanges(msgspec.Struct, frozen=True):
    footprint: Tuple[float, float] = (3.0, 9.0)
    height: Tuple[float, float] = (3.0, 5.0)


def sample_partition(seed: int, dims: Tuple[int, int, int] = (10, 10, 10), ranges: PartitionRanges = PartitionRanges()) -> GridPartition:
    """
    Draws a non uniform partition from the seed. Footprint cells in [3m, 9m], floor heights in [3m, 5m] by default.
    """
    rng = pymassing._util.rng(seed, 0)
    nx, ny, nz = dims
    low, high = ranges.footprint
    x = rng.uniform(low, high, size=nx)
    y = rng.uniform(low, high, size=ny)
    z = rng.uniform(*ranges.height, size=nz)
    return GridPartition(x_sizes=tuple(float(v) for v in x), y_sizes=tuple(float(v) for v in y), z_sizes=tuple(float(v) for v in z))


def draw_constraints(seed: int, ranges: ConstraintRanges = ConstraintRanges()) -> EpisodeConstraints:
    """
    Draws FAR and the office share uniformly, the remaining share is split over the other room types.
    """
    rng = pymassing._util.rng(seed, 1)
    far = float(rng.uniform(*ranges.far))
    office = float(rng.uniform(*ranges.office_share))
    split = rng.dirichlet(np.ones(len(NON_OFFICE_ROOMS))) * (1.0 - office)
    tpr: Dict[RoomType, float] = {room: float(share) for room, share in zip(NON_OFFICE_ROOMS, split)}
    tpr[RoomType.OFFICE] = 1.0 - sum(tpr.values())
    return EpisodeConstraints(far_target=far, tpr_targets=tpr, seed=seed)
