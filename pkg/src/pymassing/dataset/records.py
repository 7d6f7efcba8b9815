from typing import List, Tuple

import msgspec

from pymassing.gym.constraints import EpisodeConstraints
from pymassing.voxel import Action, GridPartition, RoomType

FORMAT_VERSION = "1"


class ActionRecord(msgspec.Struct, frozen=True):
    x: int
    y: int
    z: int
    room_code: int

    def to_action(self) -> Action:
        return Action(x=self.x, y=self.y, z=self.z, room=RoomType(self.room_code))

    @staticmethod
    def from_action(action: Action) -> "ActionRecord":
        return ActionRecord(x=action.x, y=action.y, z=action.z, room_code=int(action.room))


class SequenceRecord(msgspec.Struct, frozen=True, omit_defaults=True):
    """
    One persisted episode. Expert states are not stored, they are regenerated by replaying the actions.
    Generated sequences change several voxels per step, so they also carry their dense room codes.
    """

    seed: int
    constraints: EpisodeConstraints
    partition: GridPartition
    actions: List[ActionRecord]
    generated: bool = False
    states: List[List[int]] | None = None

    @property
    def raw_len(self) -> int:
        if self.states is not None:
            return len(self.states)
        return len(self.actions) + 1


class Counts(msgspec.Struct, frozen=True):
    total: int
    train: int
    eval: int


class DatasetManifest(msgspec.Struct, frozen=True):
    grid_dims: Tuple[int, int, int]
    max_subsampled_len: int
    min_raw_len: int
    counts: Counts
    seed: int
    requested: int
    format_version: str = FORMAT_VERSION

    def __post_init__(self) -> None:
        if self.counts.train + self.counts.eval != self.counts.total:
            raise ValueError(f"Split counts {self.counts.train} + {self.counts.eval} do not add up to {self.counts.total}")


MANIFEST_FILE = "manifest.json"
TRAIN_FILE = "train.ndjson"
EVAL_FILE = "eval.ndjson"

_encoder = msgspec.json.Encoder()
_record_decoder = msgspec.json.Decoder(SequenceRecord)
_manifest_decoder = msgspec.json.Decoder(DatasetManifest)


def encode_records(records: List[SequenceRecord]) -> bytes:
    return _encoder.encode_lines(records)


def decode_records(data: bytes) -> List[SequenceRecord]:
    return _record_decoder.decode_lines(data)


def encode_manifest(manifest: DatasetManifest) -> bytes:
    return msgspec.json.format(_encoder.encode(manifest), indent=2) + b"\n"


def decode_manifest(data: bytes) -> DatasetManifest:
    return _manifest_decoder.decode(data)
