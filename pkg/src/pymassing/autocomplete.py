from functools import partial
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Sequence

import msgspec
import numpy as np
import trio

from pymassing.dataset.records import encode_records
from pymassing.dataset.sequence import DesignSequence
from pymassing.errors import DimensionError, LengthError, StorageError, UsageError
from pymassing.gym.constraints import EpisodeConstraints
from pymassing.models.sequence import ModelKind, SequenceModel, forward
from pymassing.voxel import DesignEmbedding, DesignState, RoomType, decode_embedding, encode_state

logger = getLogger(__name__)


def apply_mapping(prev: DesignState, raw: DesignEmbedding) -> DesignState:
    """
    Quantizes a raw prediction, but an occupied voxel of prev never becomes empty. Its type may still change.
    """
    decoded = decode_embedding(raw, prev.partition)
    keep = (prev.rooms != RoomType.EMPTY) & (decoded.rooms == RoomType.EMPTY)
    return DesignState(rooms=np.where(keep, prev.rooms, decoded.rooms), partition=prev.partition)


class RolloutConfig(msgspec.Struct, frozen=True):
    prefix_len: int = 5
    horizon: int = 50
    checkpoint: str | None = None
    sliding_window: bool = True
    """
    Feed only the most recent max_len states once the rollout outgrows the model, otherwise fail.
    """

    def __post_init__(self) -> None:
        if self.prefix_len < 1:
            raise ValueError(f"prefix_len must be at least 1, got {self.prefix_len}")
        if self.horizon <= self.prefix_len:
            raise ValueError(f"horizon {self.horizon} must exceed prefix_len {self.prefix_len}")


def _window(states: Sequence[DesignState], max_len: int, sliding: bool) -> Sequence[DesignState]:
    if len(states) <= max_len:
        return states
    if not sliding:
        raise LengthError(f"Rollout of {len(states)} states exceeds the model's max length {max_len}")
    return states[-max_len:]


def rollout(
    model: SequenceModel,
    prefix: Sequence[DesignState],
    config: RolloutConfig,
    constraints: EpisodeConstraints | None = None,
) -> DesignSequence:
    """
    Greedy autoregressive completion: the last position's prediction, passed through apply_mapping,
    becomes the next state until the sequence holds horizon states. The prefix is kept as given.
    """
    if model.kind is not ModelKind.AVD:
        raise UsageError(f"Rollouts need an AVD model, got {model.kind.value}")
    if len(prefix) != config.prefix_len:
        raise LengthError(f"Prefix has {len(prefix)} states, configured prefix length is {config.prefix_len}")
    volume = model.config.input_dim
    for state in prefix:
        if state.partition.volume != volume:
            raise DimensionError(f"Model works on {volume} voxels, prefix state has {state.partition.volume}")
    if not config.sliding_window and config.horizon > model.config.max_len:
        raise LengthError(f"Horizon {config.horizon} exceeds the model's max length {model.config.max_len}")

    states: List[DesignState] = list(prefix)
    while len(states) < config.horizon:
        window = _window(states, model.config.max_len, config.sliding_window)
        predictions, _ = forward(model, np.stack([encode_state(s) for s in window]))
        states.append(apply_mapping(states[-1], predictions[-1]))
    return DesignSequence(states=tuple(states), actions=(), constraints=constraints)


def sequence_latents(model: SequenceModel, embeddings: np.ndarray) -> np.ndarray:
    """
    z_t for every step. Beyond the model's max length each z_t comes from the window ending at t.
    """
    max_len = model.config.max_len
    _, latents = forward(model, embeddings[:max_len])
    rows = [latents.z]
    for t in range(max_len, embeddings.shape[0]):
        _, window = forward(model, embeddings[t - max_len + 1 : t + 1])
        rows.append(window.final[None])
    return np.concatenate(rows)


def rollout_latents(model: SequenceModel, rollouts: Sequence[DesignSequence]) -> List[np.ndarray]:
    """
    Latents grouped by step: entry t is the (n_rollouts_reaching_t, model_dim) set of z_t.
    """
    per_rollout = [sequence_latents(model, r.embeddings()) for r in rollouts]
    if not per_rollout:
        return []
    steps = max(z.shape[0] for z in per_rollout)
    return [np.stack([z[t] for z in per_rollout if z.shape[0] > t]) for t in range(steps)]


async def rollout_all_async(
    model: SequenceModel,
    prefixes: Sequence[Sequence[DesignState]],
    config: RolloutConfig,
    constraints: Sequence[EpisodeConstraints | None] | None = None,
    workers: int = 4,
) -> List[DesignSequence]:
    """
    Runs independent rollouts on worker threads sharing the frozen model. Results keep the prefix order.
    """
    if model.kind is not ModelKind.AVD:
        raise UsageError(f"Rollouts need an AVD model, got {model.kind.value}")
    limiter = trio.CapacityLimiter(max(workers, 1))
    results: Dict[int, DesignSequence] = {}

    async def run(index: int) -> None:
        c = constraints[index] if constraints is not None else None
        results[index] = await trio.to_thread.run_sync(partial(rollout, model, prefixes[index], config, c), limiter=limiter)
        logger.debug("Rollout %s finished", index)

    async with trio.open_nursery() as nursery:
        for index in range(len(prefixes)):
            nursery.start_soon(run, index)
    return [results[i] for i in range(len(prefixes))]


def rollout_all(
    model: SequenceModel,
    prefixes: Sequence[Sequence[DesignState]],
    config: RolloutConfig,
    constraints: Sequence[EpisodeConstraints | None] | None = None,
    workers: int = 4,
) -> List[DesignSequence]:
    return trio.run(rollout_all_async, model, prefixes, config, constraints, workers)


def export_rollouts(rollouts: Sequence[DesignSequence], path: str | Path, seeds: Sequence[int] | None = None) -> None:
    """
    Writes rollouts as NDJSON records flagged as generated.
    """
    records = [r.to_record(seed=None if seeds is None else seeds[i], generated=True) for i, r in enumerate(rollouts)]
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_records(records))
    except OSError as e:
        raise StorageError(f"Can not write rollouts to {path}: {e}") from e
    logger.info("Exported %s rollouts to %s", len(records), path)
