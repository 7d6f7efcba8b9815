from dataclasses import dataclass
from enum import IntEnum
from logging import getLogger
from typing import Tuple, TypeAlias

import msgspec
import numpy as np

from pymassing.errors import BoundsError, ConstraintError, DimensionError

logger = getLogger(__name__)


class RoomType(IntEnum):
    """
    Room type of a single voxel. The value is the room code used by the embedding.
    """

    EMPTY = 0
    ELEVATOR = 1
    STAIRS = 2
    MECHANICAL = 3
    RESTROOM = 4
    CORRIDOR = 5
    OFFICE = 6
    LOBBY = 7


ROOM_LEVELS = 7
"""
Highest room code, the embedding divides codes by this value
"""

SERVICE_ROOMS: Tuple[RoomType, ...] = (RoomType.ELEVATOR, RoomType.STAIRS, RoomType.MECHANICAL, RoomType.RESTROOM)

DesignEmbedding: TypeAlias = np.ndarray
"""
Flat float64 vector with one entry per voxel in row-major (x, y, z) order, every entry in [0, 1].
"""


class GridPartition(msgspec.Struct, frozen=True):
    """
    Sizes of the non uniform voxel grid in meters.
    Fixed for an episode, the step actions only ever change room types.
    """

    x_sizes: Tuple[float, ...]
    y_sizes: Tuple[float, ...]
    z_sizes: Tuple[float, ...]

    def __post_init__(self) -> None:
        for name, sizes in (("x", self.x_sizes), ("y", self.y_sizes), ("z", self.z_sizes)):
            if len(sizes) == 0:
                raise DimensionError(f"Partition axis {name} has no cells")
            if any(not s > 0 for s in sizes):
                raise ConstraintError(f"Partition axis {name} has non positive sizes: {sizes}")

    @property
    def dims(self) -> Tuple[int, int, int]:
        return len(self.x_sizes), len(self.y_sizes), len(self.z_sizes)

    @property
    def volume(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    @property
    def parcel_area(self) -> float:
        return float(sum(self.x_sizes) * sum(self.y_sizes))

    def footprint_areas(self) -> np.ndarray:
        """
        Area of every (x, y) cell of a floor, shape (nx, ny)
        """
        return np.outer(np.asarray(self.x_sizes, dtype=np.float64), np.asarray(self.y_sizes, dtype=np.float64))

    @staticmethod
    def uniform(nx: int = 10, ny: int = 10, nz: int = 10, size: float = 6.0, height: float = 4.0) -> "GridPartition":
        return GridPartition(x_sizes=(size,) * nx, y_sizes=(size,) * ny, z_sizes=(height,) * nz)


class Action(msgspec.Struct, frozen=True):
    """
    Places a room type at a voxel. Voxel sizes live in the partition, not in the action.
    """

    x: int
    y: int
    z: int
    room: RoomType

    def __post_init__(self) -> None:
        if self.room == RoomType.EMPTY:
            raise ConstraintError("An action can not place an empty room")

    @property
    def location(self) -> Tuple[int, int, int]:
        return self.x, self.y, self.z

    def check_bounds(self, dims: Tuple[int, int, int]) -> None:
        for value, size in zip(self.location, dims):
            if not 0 <= value < size:
                raise BoundsError(f"Action location {self.location} outside of grid {dims}")


@dataclass(frozen=True, eq=False)
class DesignState:
    """
    One voxel snapshot: a room type per voxel plus the partition of the episode.
    The rooms array is read only, mutations go through with_room which returns a new state.
    """

    rooms: np.ndarray
    partition: GridPartition

    def __post_init__(self) -> None:
        rooms = np.array(self.rooms, dtype=np.int8, copy=True)
        if rooms.shape != self.partition.dims:
            raise DimensionError(f"Rooms of shape {rooms.shape} do not match the partition {self.partition.dims}")
        if rooms.size and (rooms.min() < 0 or rooms.max() > ROOM_LEVELS):
            raise ConstraintError("Room codes must be within 0..7")
        rooms.flags.writeable = False
        object.__setattr__(self, "rooms", rooms)

    @staticmethod
    def empty(partition: GridPartition) -> "DesignState":
        return DesignState(rooms=np.zeros(partition.dims, dtype=np.int8), partition=partition)

    def with_room(self, x: int, y: int, z: int, room: RoomType) -> "DesignState":
        rooms = self.rooms.copy()
        rooms[x, y, z] = int(room)
        return DesignState(rooms=rooms, partition=self.partition)

    def room_at(self, x: int, y: int, z: int) -> RoomType:
        return RoomType(int(self.rooms[x, y, z]))

    def occupancy(self) -> np.ndarray:
        return self.rooms != RoomType.EMPTY

    @property
    def occupied(self) -> int:
        return int(np.count_nonzero(self.rooms))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, DesignState):
            return NotImplemented
        return self.partition == other.partition and np.array_equal(self.rooms, other.rooms)

    def __hash__(self) -> int:
        return hash((self.partition, self.rooms.tobytes()))


def encode_state(state: DesignState) -> DesignEmbedding:
    """
    Flattens the rooms in row-major order and scales the codes into [0, 1].
    """
    return state.rooms.reshape(-1).astype(np.float64) / ROOM_LEVELS


def quantize(values: np.ndarray) -> np.ndarray:
    """
    Maps every value to the code of the nearest level k/7, ties go to the lower code.
    """
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    levels = np.arange(ROOM_LEVELS + 1, dtype=np.float64) / ROOM_LEVELS
    distance = np.abs(v[..., None] - levels)
    nearest = distance.min(axis=-1, keepdims=True)
    # first level within rounding noise of the minimum is the lower one
    return np.argmax(distance <= nearest + 1e-12, axis=-1).astype(np.int8)


def decode_embedding(e: DesignEmbedding, grid: GridPartition) -> DesignState:
    values = np.asarray(e, dtype=np.float64).reshape(-1)
    if values.size != grid.volume:
        raise DimensionError(f"Embedding of length {values.size} does not match grid volume {grid.volume}")
    return DesignState(rooms=quantize(values).reshape(grid.dims), partition=grid)


def state_diff(a: DesignState, b: DesignState) -> float:
    """
    Fraction of voxels holding the same room type in both states.
    """
    if a.rooms.shape != b.rooms.shape:
        raise DimensionError(f"Can not compare states of shape {a.rooms.shape} and {b.rooms.shape}")
    return float(np.mean(a.rooms == b.rooms))
