from logging import getLogger
from typing import List

import pymassing._util
from pymassing.agent.heuristic import expert_actions
from pymassing.gym.constraints import EpisodeConstraints
from pymassing.gym.env import BuildingGym, EnvState
from pymassing.voxel import ROOM_LEVELS, Action, DesignState, GridPartition, RoomType

logger = getLogger(__name__)


def horizon_policy_actions(constraints: EpisodeConstraints, grid: GridPartition, H: int, seed: int, gym: BuildingGym | None = None) -> List[Action]:
    """
    Follows the expert for H steps, then places uniformly random rooms at uniformly random voxels
    until the expert episode length is reached or the environment finishes the episode.
    Random actions may overwrite the type of occupied voxels.
    """
    if H < 0:
        raise ValueError(f"Horizon must be non negative, got {H}")
    gym = gym or BuildingGym(dims=grid.dims)
    expert = expert_actions(constraints, grid, gym)
    if H >= len(expert):
        return expert

    env = EnvState(current=DesignState.empty(grid), constraints=constraints)
    actions = list(expert[:H])
    for action in actions:
        env = gym.step(env, action)

    rng = pymassing._util.rng(seed, H)
    nx, ny, nz = grid.dims
    while len(actions) < len(expert) and not env.done:
        x, y, z = (int(v) for v in rng.integers(0, (nx, ny, nz)))
        action = Action(x=x, y=y, z=z, room=RoomType(int(rng.integers(1, ROOM_LEVELS + 1))))
        env = gym.step(env, action)
        actions.append(action)
    logger.debug("Horizon %s policy produced %s actions, expert has %s", H, len(actions), len(expert))
    return actions
