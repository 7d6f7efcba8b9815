import msgspec
import pytest
import trio

from pymassing.dataset import from_record, generate, load_dataset, subsample, validate_sequence
from pymassing.dataset.generate import build_record, generate_async
from pymassing.dataset.ops import bucket_counts, far_histogram, length_histogram, rooms_per_floor_histogram, split
from pymassing.dataset.records import EVAL_FILE, MANIFEST_FILE, TRAIN_FILE
from pymassing.defaults import DatasetConfig, GymConfig, RunConfig
from pymassing.errors import StorageError
from pymassing.gym.constraints import PartitionRanges


def small_config(min_raw_len: int = 2) -> RunConfig:
    return RunConfig(
        dataset=DatasetConfig(n=6, min_raw_len=min_raw_len, max_subsampled_len=9, far=(1.0, 2.0), workers=2),
    )


def test_generate_is_byte_identical(tmp_path):
    config = small_config()
    first = generate(6, 5, tmp_path / "a", config)
    second = generate(6, 5, tmp_path / "b", config)
    assert first == second
    for name in (MANIFEST_FILE, TRAIN_FILE, EVAL_FILE):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_manifest_counts(tmp_path):
    manifest = generate(6, 5, tmp_path, small_config())
    _, train, evaluation = load_dataset(tmp_path)
    assert manifest.counts.total == len(train) + len(evaluation)
    assert manifest.counts.train == len(train)
    assert manifest.requested == 6
    assert manifest.grid_dims == (10, 10, 10)


def test_short_sequences_are_dropped(tmp_path):
    manifest = generate(3, 5, tmp_path, small_config(min_raw_len=10_000))
    assert manifest.counts.total == 0


def test_generate_inside_trio(tmp_path):
    async def main() -> None:
        with trio.fail_after(60):
            await generate_async(2, 1, tmp_path, small_config())

    trio.run(main)
    assert (tmp_path / MANIFEST_FILE).exists()


def test_records_replay_exactly():
    config = small_config()
    record = build_record(0, 5, config)
    assert record is not None
    sequence = from_record(record, _ranges(config))
    assert len(sequence) == record.raw_len
    assert validate_sequence(sequence)
    assert sequence.states[0].occupied == 0


def test_tampered_record_fails_validation():
    config = small_config()
    record = build_record(1, 5, config)
    sequence = from_record(record, _ranges(config))
    tampered = type(sequence)(states=sequence.states[:-1] + (sequence.states[0],), actions=sequence.actions, constraints=sequence.constraints)
    assert not validate_sequence(tampered)


def test_foreign_partition_is_rejected():
    config = small_config()
    a = build_record(0, 5, config)
    b = build_record(1, 5, config)
    swapped = msgspec.structs.replace(a, partition=b.partition)
    with pytest.raises(StorageError):
        from_record(swapped, _ranges(config))


def test_subsample_keeps_first_and_last():
    config = small_config()
    sequence = from_record(build_record(2, 5, config), _ranges(config))
    short = subsample(sequence, 9)
    assert short.states[0] == sequence.states[0]
    assert short.states[-1] == sequence.states[-1]
    assert len(short) <= 10
    assert list(short.indices) == sorted(short.indices)
    assert short.raw_len == sequence.raw_len
    assert validate_sequence(short)
    assert subsample(short, 100) is short


def test_subsample_stride():
    config = small_config()
    sequence = from_record(build_record(3, 5, config), _ranges(config))
    n = len(sequence)
    stride = -(-n // 4)
    short = subsample(sequence, 4)
    expected = list(range(0, n, stride))
    if expected[-1] != n - 1:
        expected.append(n - 1)
    assert list(short.indices) == expected


def test_split_is_seeded_partition():
    items = list(range(20))
    train, evaluation = split(items, 0.75, 3)
    assert len(train) == 15
    assert sorted(train + evaluation) == items
    assert split(items, 0.75, 3) == (train, evaluation)
    with pytest.raises(ValueError):
        split(items, 1.0, 3)


def test_histograms(tmp_path):
    generate(4, 9, tmp_path, small_config())
    _, train, evaluation = load_dataset(tmp_path)
    records = train + evaluation
    lengths = length_histogram(records, width=50, upper=811)
    assert sum(b.count for b in lengths) == len(records)
    finals = [from_record(r, _ranges(small_config())).states[-1] for r in records]
    assert sum(b.count for b in far_histogram(finals)) == len(records)
    assert sum(b.count for b in rooms_per_floor_histogram(finals)) >= len(records)


def test_bucket_overflow_goes_last():
    buckets = bucket_counts([0.0, 0.4, 9.0], width=0.5, upper=1.0)
    assert [b.count for b in buckets] == [2, 1]


def test_missing_dataset(tmp_path):
    with pytest.raises(StorageError):
        load_dataset(tmp_path / "nothing")


def _ranges(config: RunConfig) -> PartitionRanges:
    return PartitionRanges(footprint=config.grid.footprint, height=config.grid.height)


def test_gym_config_reaches_the_expert():
    config = small_config()
    assert build_record(0, 5, config) is not None
    capped = msgspec.structs.replace(config, gym=GymConfig(max_steps=100))
    assert build_record(0, 5, capped) is None
