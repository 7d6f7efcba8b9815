import math
from dataclasses import dataclass, field
from logging import getLogger
from typing import List, Sequence, Tuple

import numpy as np

from pymassing.dataset.records import ActionRecord, SequenceRecord
from pymassing.errors import StorageError
from pymassing.gym.constraints import EpisodeConstraints, PartitionRanges, sample_partition
from pymassing.gym.env import BuildingGym, EnvState
from pymassing.voxel import Action, DesignState, GridPartition, encode_state

logger = getLogger(__name__)


@dataclass(frozen=True)
class DesignSequence:
    """
    Ordered design states of one episode together with the action trace that produced them.
    indices holds the raw state index of every kept state, it is the identity unless the sequence was subsampled.
    Generated sequences carry no actions and may carry no constraints.
    """

    states: Tuple[DesignState, ...]
    actions: Tuple[Action, ...]
    constraints: EpisodeConstraints | None = None
    indices: Tuple[int, ...] = field(default=())

    def __post_init__(self) -> None:
        if not self.indices:
            object.__setattr__(self, "indices", tuple(range(len(self.states))))
        if len(self.indices) != len(self.states):
            raise ValueError("Every state needs its raw index")

    @property
    def partition(self) -> GridPartition:
        return self.states[0].partition

    @property
    def raw_len(self) -> int:
        return self.indices[-1] + 1

    def __len__(self) -> int:
        return len(self.states)

    def embeddings(self) -> np.ndarray:
        """
        Stacked design embeddings, shape (T, volume)
        """
        return np.stack([encode_state(s) for s in self.states])

    def to_record(self, seed: int | None = None, generated: bool = False) -> SequenceRecord:
        if self.constraints is None:
            raise ValueError("Only sequences with episode constraints can be persisted")
        return SequenceRecord(
            seed=self.constraints.seed if seed is None else seed,
            constraints=self.constraints,
            partition=self.partition,
            actions=[ActionRecord.from_action(a) for a in self.actions],
            generated=generated,
            states=[s.rooms.reshape(-1).tolist() for s in self.states] if generated else None,
        )


def replay(
    constraints: EpisodeConstraints,
    partition: GridPartition,
    actions: Sequence[Action],
    gym: BuildingGym | None = None,
) -> DesignSequence:
    gym = gym or BuildingGym(dims=partition.dims)
    env = EnvState(current=DesignState.empty(partition), constraints=constraints)
    states = [env.current]
    for action in actions:
        env = gym.step(env, action)
        states.append(env.current)
    return DesignSequence(states=tuple(states), actions=tuple(actions), constraints=constraints)


def from_record(record: SequenceRecord, partition_ranges: PartitionRanges | None = None, gym: BuildingGym | None = None) -> DesignSequence:
    """
    Regenerates the states of a record. Expert records must carry the partition their seed produces.
    The partition ranges default to the ones of the environment.
    """
    if partition_ranges is None:
        partition_ranges = gym.partition_ranges if gym is not None else PartitionRanges()
    actions = [a.to_action() for a in record.actions]
    if record.generated:
        if record.states is None:
            raise StorageError(f"Generated record {record.seed} carries no states")
        states = tuple(DesignState(rooms=np.asarray(codes, dtype=np.int8).reshape(record.partition.dims), partition=record.partition) for codes in record.states)
        return DesignSequence(states=states, actions=tuple(actions), constraints=record.constraints)
    expected = sample_partition(record.constraints.seed, record.partition.dims, partition_ranges)
    if expected != record.partition:
        raise StorageError(f"Record {record.seed} has a partition that does not match its constraint seed")
    return replay(record.constraints, record.partition, actions, gym)


def validate_sequence(sequence: DesignSequence, gym: BuildingGym | None = None) -> bool:
    """
    True if replaying the actions reproduces the (possibly subsampled) states bit exactly.
    """
    if sequence.constraints is None:
        return False
    replayed = replay(sequence.constraints, sequence.partition, sequence.actions, gym)
    return all(replayed.states[i] == s for i, s in zip(sequence.indices, sequence.states))


def subsample(sequence: DesignSequence, max_len: int) -> DesignSequence:
    """
    Keeps every stride-th state from index 0 with stride ceil(len / max_len), the final state is always kept.
    """
    if max_len < 2:
        raise ValueError(f"Subsampling needs max_len >= 2, got {max_len}")
    length = len(sequence.states)
    if length <= max_len:
        return sequence
    stride = math.ceil(length / max_len)
    keep: List[int] = list(range(0, length, stride))
    if keep[-1] != length - 1:
        keep.append(length - 1)
    return DesignSequence(
        states=tuple(sequence.states[i] for i in keep),
        actions=sequence.actions,
        constraints=sequence.constraints,
        indices=tuple(sequence.indices[i] for i in keep),
    )
