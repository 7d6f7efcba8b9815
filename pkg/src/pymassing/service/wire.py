from typing import Dict, List, Literal, Tuple

import msgspec
import numpy as np

from pymassing.errors import DimensionError
from pymassing.gym.constraints import EpisodeConstraints
from pymassing.voxel import ROOM_LEVELS, DesignState, GridPartition


class ApiDesignState(msgspec.Struct, frozen=True):
    """
    Wire form of a design state: grid dims and row-major room codes, optionally the partition sizes.
    """

    dims: Tuple[int, int, int]
    codes: List[int]
    partition: GridPartition | None = None


class AutocompleteRequest(msgspec.Struct, frozen=True):
    states: List[ApiDesignState]
    horizon: int


class AutocompleteResponse(msgspec.Struct, frozen=True):
    states: List[ApiDesignState]
    monotonic: bool


class PreferenceRequest(msgspec.Struct, frozen=True):
    a: List[ApiDesignState]
    b: List[ApiDesignState]


class PreferenceResponse(msgspec.Struct, frozen=True):
    winner: Literal["first", "second", "tie"]
    scores: Tuple[float, float]


class ApiAction(msgspec.Struct, frozen=True, array_like=True):
    x: int
    y: int
    z: int
    room_code: int


class ExpertResponse(msgspec.Struct, frozen=True):
    seed: int
    constraints: EpisodeConstraints
    partition: GridPartition
    actions: List[ApiAction]
    states: List[ApiDesignState]


class HealthResponse(msgspec.Struct, frozen=True):
    status: Literal["ready", "partial"]
    checkpoints: Dict[str, str]


class ErrorResponse(msgspec.Struct, frozen=True):
    error: str
    detail: str


class MalformedStateError(ValueError):
    pass


def to_api(state: DesignState, with_partition: bool = False) -> ApiDesignState:
    return ApiDesignState(
        dims=state.partition.dims,
        codes=[int(c) for c in state.rooms.reshape(-1)],
        partition=state.partition if with_partition else None,
    )


def from_api(api: ApiDesignState, default: GridPartition) -> DesignState:
    """
    Codes outside 0..7 are malformed, a length or dims that disagree with the served grid is a dimension mismatch.
    """
    if any(c < 0 or c > ROOM_LEVELS for c in api.codes):
        raise MalformedStateError("Room codes must lie in 0..7")
    partition = api.partition if api.partition is not None else default
    if tuple(api.dims) != partition.dims:
        raise DimensionError(f"State dims {tuple(api.dims)} do not match partition dims {partition.dims}")
    if len(api.codes) != partition.volume:
        raise DimensionError(f"Got {len(api.codes)} codes for a grid of {partition.volume} voxels")
    return DesignState(rooms=np.asarray(api.codes, dtype=np.int8).reshape(partition.dims), partition=partition)


_encoder = msgspec.json.Encoder()


def encode(obj: msgspec.Struct) -> bytes:
    return _encoder.encode(obj)
