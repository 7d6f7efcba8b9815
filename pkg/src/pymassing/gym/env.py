from dataclasses import dataclass
from logging import getLogger
from typing import Dict, Iterable, List, Tuple

import msgspec
import numpy as np

from pymassing.defaults import RunConfig
from pymassing.errors import EpisodeFinishedError
from pymassing.gym.constraints import EpisodeConstraints, PartitionRanges, sample_partition
from pymassing.voxel import Action, DesignState, RoomType

logger = getLogger(__name__)

MAX_STEPS = 810
"""
Hard cap on the episode length, the longest raw design sequence
"""


class Measurement(msgspec.Struct, frozen=True):
    far_so_far: float
    tpr_so_far: Dict[RoomType, float]
    occupied: int


@dataclass(frozen=True)
class EnvState:
    """
    Value of the environment after a number of accepted steps.
    """

    current: DesignState
    constraints: EpisodeConstraints
    step_count: int = 0
    done: bool = False


def occupied_area(state: DesignState) -> float:
    areas = state.partition.footprint_areas()
    return float((areas[:, :, None] * (state.rooms != RoomType.EMPTY)).sum())


def measure_state(state: DesignState) -> Measurement:
    """
    FAR is the occupied footprint area over the parcel area, TPR the per room type area share of the occupied voxels.
    """
    areas = state.partition.footprint_areas()[:, :, None]
    areas = np.broadcast_to(areas, state.rooms.shape)
    occupied = state.rooms != RoomType.EMPTY
    total = float(areas[occupied].sum())
    tpr: Dict[RoomType, float] = {}
    for room in RoomType:
        if room == RoomType.EMPTY:
            continue
        tpr[room] = float(areas[state.rooms == room].sum()) / total if total > 0 else 0.0
    return Measurement(far_so_far=total / state.partition.parcel_area, tpr_so_far=tpr, occupied=int(np.count_nonzero(occupied)))


def measure(env: EnvState) -> Measurement:
    return measure_state(env.current)


class BuildingGym:
    """
    Sequential voxel design environment.
    reset creates an empty partitioned grid, step places one room and returns the next state.
    The environment itself holds no episode state, every EnvState is a value.
    """

    dims: Tuple[int, int, int]
    max_steps: int
    far_tolerance: float
    partition_ranges: PartitionRanges

    def __init__(
        self,
        dims: Tuple[int, int, int] = (10, 10, 10),
        max_steps: int = MAX_STEPS,
        far_tolerance: float = 1e-9,
        partition_ranges: PartitionRanges = PartitionRanges(),
    ) -> None:
        self.dims = dims
        self.max_steps = max_steps
        self.far_tolerance = far_tolerance
        self.partition_ranges = partition_ranges

    @classmethod
    def from_config(cls, config: RunConfig) -> "BuildingGym":
        return cls(
            dims=config.grid.dims,
            max_steps=config.gym.max_steps,
            far_tolerance=config.gym.far_tolerance,
            partition_ranges=PartitionRanges(footprint=config.grid.footprint, height=config.grid.height),
        )

    def reset(self, constraints: EpisodeConstraints) -> EnvState:
        partition = sample_partition(constraints.seed, self.dims, self.partition_ranges)
        return EnvState(current=DesignState.empty(partition), constraints=constraints)

    def step(self, env: EnvState, action: Action) -> EnvState:
        if env.done:
            raise EpisodeFinishedError(f"Episode already finished after {env.step_count} steps")
        action.check_bounds(env.current.partition.dims)
        # monotone occupancy holds because actions never place empty rooms
        current = env.current.with_room(action.x, action.y, action.z, action.room)
        step_count = env.step_count + 1
        far = occupied_area(current) / current.partition.parcel_area
        done = far >= env.constraints.far_target - self.far_tolerance or step_count >= self.max_steps
        return EnvState(current=current, constraints=env.constraints, step_count=step_count, done=done)

    def replay(self, constraints: EpisodeConstraints, actions: Iterable[Action]) -> List[DesignState]:
        """
        Runs an action trace from reset and returns every state, the post reset state included.
        """
        env = self.reset(constraints)
        states = [env.current]
        for action in actions:
            env = self.step(env, action)
            states.append(env.current)
        return states


_default = BuildingGym()


def reset(constraints: EpisodeConstraints) -> EnvState:
    return _default.reset(constraints)


def step(env: EnvState, action: Action) -> EnvState:
    return _default.step(env, action)
