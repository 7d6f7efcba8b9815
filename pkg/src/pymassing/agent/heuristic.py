from logging import getLogger
from typing import List, Tuple

import msgspec
import numpy as np

import pymassing._util
from pymassing.errors import PlanningError
from pymassing.gym.constraints import ConstraintRanges, EpisodeConstraints, PartitionRanges, draw_constraints, sample_partition
from pymassing.gym.env import BuildingGym, EnvState, measure
from pymassing.voxel import Action, DesignState, GridPartition, RoomType

logger = getLogger(__name__)

AREA_PER_ELEVATOR = 2000.0
"""
Total floor area in square meters served by one elevator
"""

TPR_TOLERANCE = 0.05

SYMMETRIC_COUNTS: Tuple[int, ...] = (1, 2, 4)

_NEIGHBORS: Tuple[Tuple[int, int], ...] = ((1, 0), (0, 1), (-1, 0), (0, -1))
_SERVICE_ORDER: Tuple[RoomType, ...] = (RoomType.STAIRS, RoomType.MECHANICAL, RoomType.RESTROOM)

Cell = Tuple[int, int]


class AgentPlan(msgspec.Struct, frozen=True):
    """
    Core layout of an expert design.
    The service layout is a per floor template of (x, y, room) in placement order,
    it is duplicated on every used floor. office_cells is the number of scanline cells grown as offices on each floor above the lobby.
    """

    elevator_sites: Tuple[Tuple[int, int, int], ...]
    service_layout: Tuple[Tuple[int, int, RoomType], ...]
    floors_used: int
    office_cells: int

    def core_area(self, grid: GridPartition) -> float:
        areas = grid.footprint_areas()
        return float(sum(areas[x, y] for x, y, _ in self.service_layout))


def elevator_count(constraints: EpisodeConstraints, grid: GridPartition) -> int:
    raw = int(round(constraints.far_target * grid.parcel_area / AREA_PER_ELEVATOR))
    count = min(max(raw, 1), 4)
    # only symmetric placements exist for 1, 2 and 4 elevators
    return 2 if count == 3 else count


def rotate(cell: Cell, dims: Tuple[int, int, int]) -> Cell:
    """
    180 degree rotation of a footprint cell.
    """
    return dims[0] - 1 - cell[0], dims[1] - 1 - cell[1]


def elevator_sites(count: int, dims: Tuple[int, int, int]) -> List[Cell]:
    """
    One elevator sits on the rounded down center. Two take opposite quarter points, four take all of them.
    The quarter points are n // 4 and its mirror n - 1 - n // 4, which is (3n) // 4 on the default grid.
    """
    nx, ny, _ = dims
    match count:
        case 1:
            return [(nx // 2, ny // 2)]
        case 2 | 4:
            lx, ly = nx // 4, ny // 4
            hx, hy = nx - 1 - lx, ny - 1 - ly
        case _:
            raise PlanningError(f"No symmetric placement for {count} elevators")
    if lx < 1 or ly < 1 or hx <= lx or hy <= ly:
        raise PlanningError(f"Grid {dims} is too small to place {count} elevators")
    if count == 2:
        return [(lx, ly), (hx, hy)]
    return [(lx, ly), (hx, ly), (hx, hy), (lx, hy)]


def _corridor_path(start: Cell, end: Cell) -> List[Cell]:
    # axis aligned shortest path, x first
    path: List[Cell] = []
    x, y = start
    while x != end[0]:
        x += 1 if end[0] > x else -1
        path.append((x, y))
    while y != end[1]:
        y += 1 if end[1] > y else -1
        path.append((x, y))
    return path[:-1]


def _service_layout(sites: List[Cell], dims: Tuple[int, int, int]) -> List[Tuple[int, int, RoomType]]:
    nx, ny, _ = dims
    taken: dict[Cell, RoomType] = {site: RoomType.ELEVATOR for site in sites}
    layout: List[Tuple[int, int, RoomType]] = [(x, y, RoomType.ELEVATOR) for x, y in sites]

    for sx, sy in sites:
        rooms = list(_SERVICE_ORDER)
        for dx, dy in _NEIGHBORS:
            cell = (sx + dx, sy + dy)
            if not rooms:
                break
            if 0 <= cell[0] < nx and 0 <= cell[1] < ny and cell not in taken:
                room = rooms.pop(0)
                taken[cell] = room
                layout.append((cell[0], cell[1], room))
        if rooms:
            raise PlanningError(f"No space for service rooms around the elevator at {(sx, sy)}")

    for start, end in zip(sites, sites[1:]):
        for cell in _corridor_path(start, end):
            if cell not in taken:
                taken[cell] = RoomType.CORRIDOR
                layout.append((cell[0], cell[1], RoomType.CORRIDOR))
    return layout


def _scanline(grid: GridPartition, blocked: set[Cell]) -> List[Cell]:
    # rows in x, cells in y, the occupied footprint stays a union of full rows
    nx, ny, _ = grid.dims
    return [(x, y) for x in range(nx) for y in range(ny) if (x, y) not in blocked]


def _office_cells(free: List[Cell], areas: np.ndarray, target: float) -> List[Cell]:
    best, best_error, running = 1, float("inf"), 0.0
    for count, (x, y) in enumerate(free, start=1):
        running += areas[x, y]
        error = abs(running - target)
        if error < best_error:
            best, best_error = count, error
        if running > target:
            break
    return free[:best]


def _lobby_cells(free: List[Cell], areas: np.ndarray, needed: float, last_area: float) -> List[Cell]:
    """
    Scanline lobby whose area lands in [needed, needed + last_area),
    so the FAR target is met exactly with the final office voxel.
    """
    if needed <= 0:
        return []
    margin = 1e-6 * max(needed, 1.0)
    prefix = [0.0]
    for x, y in free:
        prefix.append(prefix[-1] + areas[x, y])
    natural = next((i for i, s in enumerate(prefix) if s >= needed), len(free))
    for keep in range(max(natural - 1, 0), max(natural - 5, -1), -1):
        low = needed - prefix[keep] + margin
        high = needed - prefix[keep] + last_area - margin
        for cell in free[keep:]:
            if low <= areas[cell] < high:
                return free[:keep] + [cell]
    return free[:natural]


def _area(cells: List[Cell], areas: np.ndarray) -> float:
    return float(sum(areas[c] for c in cells))


def _size_floors(
    constraints: EpisodeConstraints,
    grid: GridPartition,
    core_area: float,
    free: List[Cell],
    max_floors: int,
    tolerance: float,
    far_tolerance: float,
) -> Tuple[float, int, int] | None:
    """
    Office share error, floor count and office cells per floor of the floor count whose office share lands closest to the target.
    The office total is clipped so the lobby fits floor 0, the candidate is then grown exactly as the expert grows it.
    Candidates whose FAR would be reached before the final office voxel are skipped, so every office floor stays complete.
    """
    areas = grid.footprint_areas()
    total = constraints.far_target * grid.parcel_area
    target = constraints.office_share * total
    capacity = _area(free, areas)
    best: Tuple[float, int, int] | None = None
    for floors in range(2, max_floors + 1):
        rest = total - floors * core_area
        low, high = max(0.0, rest - capacity), min((floors - 1) * capacity, rest)
        if high <= 0.0 or low > high:
            continue
        office = _office_cells(free, areas, min(max(target, low), high) / (floors - 1))
        while len(office) > 1 and rest - (floors - 1) * _area(office, areas) <= 0.0:
            office = office[:-1]
        office_area = _area(office, areas)
        needed = rest - (floors - 1) * office_area
        if needed <= 0.0:
            continue
        lobby_area = _area(_lobby_cells(free, areas, needed, float(areas[office[-1]])), areas)
        built = floors * core_area + lobby_area + (floors - 1) * office_area
        if lobby_area < needed or (built - areas[office[-1]]) / grid.parcel_area >= constraints.far_target - far_tolerance:
            continue
        error = abs((floors - 1) * office_area / built - constraints.office_share)
        if error <= tolerance and (best is None or error < best[0]):
            best = (error, floors, len(office))
    return best


def plan_core(
    constraints: EpisodeConstraints,
    grid: GridPartition,
    gym: BuildingGym | None = None,
    tpr_tolerance: float = TPR_TOLERANCE,
) -> AgentPlan:
    """
    Elevator count and placement, service rooms around the elevators and the corridors connecting them,
    and the floors and office cells the building needs.

    The elevator count derived from FAR is tried first. When its core leaves no floor count
    that meets the office share, the other symmetric counts are tried, the nearest first.
    """
    gym = gym or BuildingGym(dims=grid.dims)
    dims = grid.dims
    if dims[0] < 3 or dims[1] < 3 or dims[2] < 2:
        raise PlanningError(f"Grid {dims} is too small to host a building")
    areas = grid.footprint_areas()
    # a floor holds at most nx * ny actions, the episode has to end before the step cap
    max_floors = min(dims[2], (gym.max_steps - 1) // (dims[0] * dims[1]))
    preferred = elevator_count(constraints, grid)

    reasons: List[str] = []
    for count in sorted(SYMMETRIC_COUNTS, key=lambda c: (abs(c - preferred), c)):
        try:
            sites = elevator_sites(count, dims)
            layout = _service_layout(sites, dims)
        except PlanningError as e:
            reasons.append(str(e))
            continue
        free = _scanline(grid, {(x, y) for x, y, _ in layout})
        if not free:
            reasons.append(f"{count} elevators leave no free cell")
            continue
        core_area = _area([(x, y) for x, y, _ in layout], areas)
        sizing = _size_floors(constraints, grid, core_area, free, max_floors, tpr_tolerance, gym.far_tolerance)
        if sizing is None:
            reasons.append(f"{count} elevators leave no floor count for office share {constraints.office_share:.3f}")
            continue
        error, floors, office_cells = sizing
        if count != preferred:
            logger.debug("Core of %s elevators does not fit, using %s", preferred, count)
        logger.debug("Planned %s elevators, %s core cells, %s floors, office share error %.4f", count, len(layout), floors, error)
        return AgentPlan(
            elevator_sites=tuple((x, y, 0) for x, y in sites),
            service_layout=tuple(layout),
            floors_used=floors,
            office_cells=office_cells,
        )
    raise PlanningError(f"No core satisfies FAR {constraints.far_target:.3f} on grid {dims}: {'; '.join(reasons)}")


def expert_actions(
    constraints: EpisodeConstraints,
    grid: GridPartition,
    gym: BuildingGym | None = None,
    tpr_tolerance: float = TPR_TOLERANCE,
) -> List[Action]:
    """
    The expert action sequence: the core floor by floor, the lobby on floor 0, offices on floor 1
    and the floor 1 layout duplicated upwards. The sequence ends with the action reaching the FAR target.
    """
    gym = gym or BuildingGym(dims=grid.dims)
    plan = plan_core(constraints, grid, gym, tpr_tolerance)
    areas = grid.footprint_areas()
    floors = plan.floors_used
    total = constraints.far_target * grid.parcel_area

    free = _scanline(grid, {(x, y) for x, y, _ in plan.service_layout})
    office = free[: plan.office_cells]
    lobby = _lobby_cells(free, areas, total - floors * plan.core_area(grid) - (floors - 1) * _area(office, areas), float(areas[office[-1]]))

    actions: List[Action] = []
    for z in range(floors):
        actions.extend(Action(x=x, y=y, z=z, room=room) for x, y, room in plan.service_layout)
    actions.extend(Action(x=x, y=y, z=0, room=RoomType.LOBBY) for x, y in lobby)
    for z in range(1, floors):
        actions.extend(Action(x=x, y=y, z=z, room=RoomType.OFFICE) for x, y in office)

    env = EnvState(current=DesignState.empty(grid), constraints=constraints)
    for index, action in enumerate(actions):
        env = gym.step(env, action)
        if env.done:
            if index + 1 < len(actions):
                logger.debug("FAR reached %s actions early", len(actions) - index - 1)
            actions = actions[: index + 1]
            break
    if not env.done or env.step_count >= gym.max_steps:
        raise PlanningError(f"Expert plan of {len(actions)} actions does not reach FAR {constraints.far_target:.3f}")
    share = measure(env).tpr_so_far[RoomType.OFFICE]
    if abs(share - constraints.office_share) > tpr_tolerance:
        raise PlanningError(f"Expert office share {share:.3f} misses the target {constraints.office_share:.3f}")
    return actions


def sample_feasible_constraints(
    seed: int,
    dims: Tuple[int, int, int] = (10, 10, 10),
    ranges: ConstraintRanges = ConstraintRanges(),
    partition_ranges: PartitionRanges = PartitionRanges(),
    max_attempts: int = 200,
    gym: BuildingGym | None = None,
) -> Tuple[EpisodeConstraints, GridPartition, List[Action]]:
    """
    Draws constraints and plans the expert for them. The first draw is expected to succeed,
    later attempts only guard against partitions the planner can not build on.
    """
    for attempt in range(max_attempts):
        constraints = draw_constraints(pymassing._util.derive_seed(seed, attempt), ranges)
        grid = sample_partition(constraints.seed, dims, partition_ranges)
        try:
            return constraints, grid, expert_actions(constraints, grid, gym)
        except PlanningError as e:
            logger.warning("Rejecting constraints of attempt %s for seed %s: %s", attempt, seed, e)
    raise PlanningError(f"No feasible constraints after {max_attempts} attempts for seed {seed}")
