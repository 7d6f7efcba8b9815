from functools import partial
from logging import getLogger
from pathlib import Path
from typing import Dict, List, Tuple

import trio

import pymassing._util
from pymassing.agent.heuristic import sample_feasible_constraints
from pymassing.dataset.ops import split
from pymassing.dataset.records import (
    EVAL_FILE,
    MANIFEST_FILE,
    TRAIN_FILE,
    ActionRecord,
    Counts,
    DatasetManifest,
    SequenceRecord,
    decode_manifest,
    decode_records,
    encode_manifest,
    encode_records,
)
from pymassing.defaults import RunConfig
from pymassing.errors import PlanningError, StorageError
from pymassing.gym.constraints import ConstraintRanges
from pymassing.gym.env import BuildingGym

logger = getLogger(__name__)


def build_record(index: int, seed: int, config: RunConfig) -> SequenceRecord | None:
    """
    One expert episode. The episode seed only depends on the master seed and the index.
    """
    episode_seed = pymassing._util.derive_seed(seed, index)
    gym = BuildingGym.from_config(config)
    try:
        constraints, grid, actions = sample_feasible_constraints(
            episode_seed,
            dims=config.grid.dims,
            ranges=ConstraintRanges(far=config.dataset.far, office_share=config.dataset.office_share),
            partition_ranges=gym.partition_ranges,
            gym=gym,
        )
    except PlanningError as e:
        logger.warning("Episode %s dropped: %s", index, e)
        return None
    return SequenceRecord(seed=episode_seed, constraints=constraints, partition=grid, actions=[ActionRecord.from_action(a) for a in actions])


async def _worker(
    index: int,
    seed: int,
    config: RunConfig,
    limiter: trio.CapacityLimiter,
    send: trio.MemorySendChannel[Tuple[int, SequenceRecord | None]],
) -> None:
    async with send:
        record = await trio.to_thread.run_sync(partial(build_record, index, seed, config), limiter=limiter)
        logger.debug("Episode %s finished", index)
        await send.send((index, record))


async def _writer(
    receive: trio.MemoryReceiveChannel[Tuple[int, SequenceRecord | None]],
    out: Path,
    n: int,
    seed: int,
    config: RunConfig,
    task_status=trio.TASK_STATUS_IGNORED,
) -> None:
    # the only task touching the files, records arrive in any order and are written in index order
    task_status.started()
    results: Dict[int, SequenceRecord | None] = {}
    async with receive:
        async for index, record in receive:
            results[index] = record

    kept: List[SequenceRecord] = []
    for index in range(n):
        record = results.get(index)
        if record is not None and record.raw_len >= config.dataset.min_raw_len:
            kept.append(record)
    train, evaluation = split(kept, config.dataset.train_fraction, seed)
    manifest = DatasetManifest(
        grid_dims=config.grid.dims,
        max_subsampled_len=config.dataset.max_subsampled_len,
        min_raw_len=config.dataset.min_raw_len,
        counts=Counts(total=len(kept), train=len(train), eval=len(evaluation)),
        seed=seed,
        requested=n,
    )
    try:
        await trio.Path(out).mkdir(parents=True, exist_ok=True)
        await trio.Path(out / TRAIN_FILE).write_bytes(encode_records(train))
        await trio.Path(out / EVAL_FILE).write_bytes(encode_records(evaluation))
        await trio.Path(out / MANIFEST_FILE).write_bytes(encode_manifest(manifest))
    except OSError as e:
        raise StorageError(f"Can not write dataset to {out}: {e}") from e
    logger.info("Kept %s of %s episodes (%s train, %s eval) in %s", len(kept), n, len(train), len(evaluation), out)


async def generate_async(n: int, seed: int, out: Path, config: RunConfig) -> None:
    if n <= 0:
        raise ValueError(f"Number of episodes must be positive, got {n}")
    send, receive = trio.open_memory_channel[Tuple[int, SequenceRecord | None]](config.dataset.workers)
    limiter = trio.CapacityLimiter(max(config.dataset.workers, 1))
    async with trio.open_nursery() as nursery:
        await nursery.start(_writer, receive, out, n, seed, config)
        async with send:
            for index in range(n):
                nursery.start_soon(_worker, index, seed, config, limiter, send.clone())


def generate(n: int, seed: int, out: str | Path, config: RunConfig) -> DatasetManifest:
    """
    Generates n expert episodes, drops the short ones, splits and persists them.
    Same (n, seed, config) gives byte identical files.
    """
    trio.run(generate_async, n, seed, Path(out), config)
    return load_manifest(out)


def load_manifest(path: str | Path) -> DatasetManifest:
    try:
        return decode_manifest((Path(path) / MANIFEST_FILE).read_bytes())
    except OSError as e:
        raise StorageError(f"Can not read manifest in {path}: {e}") from e


def load_dataset(path: str | Path) -> Tuple[DatasetManifest, List[SequenceRecord], List[SequenceRecord]]:
    manifest = load_manifest(path)
    try:
        train = decode_records((Path(path) / TRAIN_FILE).read_bytes())
        evaluation = decode_records((Path(path) / EVAL_FILE).read_bytes())
    except OSError as e:
        raise StorageError(f"Can not read records in {path}: {e}") from e
    return manifest, train, evaluation
