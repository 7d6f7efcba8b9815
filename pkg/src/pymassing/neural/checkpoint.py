import hashlib
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Tuple, Type, TypeVar

import msgspec
import msgspec.msgpack
import numpy as np

from pymassing.errors import CheckpointError, StorageError

logger = getLogger(__name__)

MAGIC = b"PYMASSCK"
FORMAT_VERSION = 1

C = TypeVar("C")


class BlobEntry(msgspec.Struct, frozen=True, array_like=True):
    name: str
    shape: Tuple[int, ...]


class CheckpointHeader(msgspec.Struct, frozen=True):
    kind: str
    config: msgspec.Raw
    blobs: List[BlobEntry]


_encoder = msgspec.msgpack.Encoder()
_header_decoder = msgspec.msgpack.Decoder(CheckpointHeader)


def encode_checkpoint(kind: str, config: msgspec.Struct, tensors: Dict[str, np.ndarray]) -> bytes:
    """
    Layout: magic, format version (4 bytes), header length (4 bytes), msgpack header,
    then every tensor as float64 little endian in header order.
    """
    entries = [BlobEntry(name=name, shape=tuple(int(s) for s in arr.shape)) for name, arr in tensors.items()]
    header = _encoder.encode(CheckpointHeader(kind=kind, config=msgspec.Raw(_encoder.encode(config)), blobs=entries))
    parts = [MAGIC, FORMAT_VERSION.to_bytes(4, "big"), len(header).to_bytes(4, "big"), header]
    parts.extend(np.ascontiguousarray(arr, dtype="<f8").tobytes() for arr in tensors.values())
    return b"".join(parts)


def decode_checkpoint(data: bytes, kind: str, config_type: Type[C]) -> Tuple[C, Dict[str, np.ndarray]]:
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError("Not a pymassing checkpoint")
    offset = len(MAGIC)
    version = int.from_bytes(data[offset : offset + 4], "big")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint format version {version}")
    header_len = int.from_bytes(data[offset + 4 : offset + 8], "big")
    offset += 8
    try:
        header = _header_decoder.decode(data[offset : offset + header_len])
        config = msgspec.msgpack.decode(header.config, type=config_type)
    except msgspec.DecodeError as e:
        raise CheckpointError(f"Corrupt checkpoint header: {e}") from e
    if header.kind != kind:
        raise CheckpointError(f"Expected a {kind} checkpoint, got {header.kind}")
    offset += header_len

    tensors: Dict[str, np.ndarray] = {}
    for entry in header.blobs:
        size = int(np.prod(entry.shape, dtype=np.int64)) * 8
        if offset + size > len(data):
            raise CheckpointError(f"Checkpoint is truncated in tensor {entry.name}")
        tensors[entry.name] = np.frombuffer(data, dtype="<f8", count=size // 8, offset=offset).astype(np.float64).reshape(entry.shape)
        offset += size
    if offset != len(data):
        raise CheckpointError(f"{len(data) - offset} trailing bytes after the last tensor")
    return config, tensors


def save_checkpoint(path: str | Path, kind: str, config: msgspec.Struct, tensors: Dict[str, np.ndarray]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode_checkpoint(kind, config, tensors))
    except OSError as e:
        raise StorageError(f"Can not write checkpoint {path}: {e}") from e
    logger.info("Saved %s checkpoint with %s tensors to %s", kind, len(tensors), path)


def load_checkpoint(path: str | Path, kind: str, config_type: Type[C]) -> Tuple[C, Dict[str, np.ndarray]]:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise StorageError(f"Can not read checkpoint {path}: {e}") from e
    return decode_checkpoint(data, kind, config_type)


def checkpoint_hash(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as e:
        raise StorageError(f"Can not read checkpoint {path}: {e}") from e
