import json

import pytest

from pymassing.cli import build_parser, main


def write_config(tmp_path, **sections) -> str:
    config = {
        "dataset": {"n": 4, "train_fraction": 0.5, "min_raw_len": 2, "max_subsampled_len": 9, "far": [1.0, 2.0], "workers": 2},
        "model": {"model_dim": 8, "layers": 1, "heads": 2, "max_len": 10},
        "train": {"epochs": 2, "batch_size": 2, "patience": 0},
        "flow": {"coupling_layers": 2, "hidden_dim": 8, "epochs": 2, "batch_size": 2},
        "evaluation": {"pairs": 2, "reruns": 1, "horizons_percent": [0, 100], "ablation_layers": [1], "ablation_heads": [2], "ablation_epochs": 1},
        "rollout": {"prefix_len": 2, "horizon": 6, "count": 2},
    }
    config.update(sections)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(config))
    return str(path)


def test_gen_twice_is_identical(tmp_path):
    config = write_config(tmp_path)
    assert main(["gen", "--config", config, "--seed", "4", "--out", str(tmp_path / "a")]) == 0
    assert main(["gen", "--config", config, "--seed", "4", "--out", str(tmp_path / "b")]) == 0
    for name in ("manifest.json", "train.ndjson", "eval.ndjson"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_hist_writes_tables(tmp_path):
    config = write_config(tmp_path)
    assert main(["gen", "--config", config, "--out", str(tmp_path / "data")]) == 0
    assert main(["hist", "--config", config, "--data", str(tmp_path / "data"), "--out", str(tmp_path / "out")]) == 0
    for name in ("hist_length.tsv", "hist_far.tsv", "hist_rooms_per_floor.tsv"):
        lines = (tmp_path / "out" / name).read_text().splitlines()
        assert lines[0] == "low\thigh\tcount"
    summary = json.loads((tmp_path / "out" / "hist.json").read_text())
    assert set(summary) == {"length", "far", "rooms_per_floor"}
    assert sum(count for _, _, count in summary["length"]) == 4


def test_missing_dataset_is_a_storage_error(tmp_path):
    config = write_config(tmp_path)
    assert main(["train", "--kind", "vdr", "--config", config, "--data", str(tmp_path / "none"), "--out", str(tmp_path)]) == 3


def test_invalid_config_exit_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"schema_version": 99}')
    assert main(["gen", "--config", str(path), "--out", str(tmp_path)]) == 2
    path.write_text("{nope")
    assert main(["gen", "--config", str(path), "--out", str(tmp_path)]) == 2
    assert main(["gen", "--config", str(tmp_path / "missing.json"), "--out", str(tmp_path)]) == 3


def test_unknown_command_exits():
    with pytest.raises(SystemExit) as e:
        build_parser().parse_args(["fly"])
    assert e.value.code == 2


@pytest.mark.slow
def test_pipeline(tmp_path):
    config = write_config(tmp_path)
    data, out = str(tmp_path / "data"), tmp_path / "out"
    common = ["--config", config, "--data", data, "--out", str(out)]
    assert main(["gen", "--config", config, "--out", data]) == 0
    assert main(["train", "--kind", "vdr", *common]) == 0
    assert main(["train", "--kind", "avd", *common]) == 0
    assert main(["train", "--kind", "vae", *common]) == 0
    assert main(["train-flow", "--encoder", str(out / "vdr.ckpt"), *common]) == 0
    assert main(["eval-recon", "--model", str(out / "vdr.ckpt"), "--ablation", *common]) == 0
    assert main(["eval-pref", "--encoder", str(out / "vdr.ckpt"), "--flow", str(out / "flow.ckpt"), "--vae", str(out / "vae.ckpt"), *common]) == 0
    assert main(["rollout", "--model", str(out / "avd.ckpt"), *common]) == 0
    assert main(["eval-fid", "--encoder", str(out / "vdr.ckpt"), "--model", str(out / "avd.ckpt"), *common]) == 0
    for name in ("vdr_loss.tsv", "flow_nll.tsv", "recon.tsv", "ablation.tsv", "preference.tsv", "rollout_train.tsv", "rollouts_train.ndjson", "fid.tsv"):
        assert (out / name).exists(), name
    assert main(["rollout", "--model", str(out / "vdr.ckpt"), *common]) == 2


@pytest.mark.parametrize("n", ["0", "-3"])
def test_gen_rejects_non_positive_counts(tmp_path, n):
    config = write_config(tmp_path)
    assert main(["gen", "--config", config, "--n", n, "--out", str(tmp_path / "data")]) == 2
    assert not (tmp_path / "data" / "manifest.json").exists()


def test_scale_accepts_paper_and_its_alias():
    parser = build_parser()
    assert parser.parse_args(["hist", "--scale", "paper"]).scale == "paper"
    assert parser.parse_args(["hist", "--scale", "full"]).scale == "full"


@pytest.mark.slow
def test_pipeline_summaries(tmp_path):
    config = write_config(tmp_path)
    data, out = str(tmp_path / "data"), tmp_path / "out"
    common = ["--config", config, "--data", data, "--out", str(out)]
    assert main(["gen", "--config", config, "--out", data]) == 0
    assert main(["train", "--kind", "vdr", *common]) == 0
    assert main(["train", "--kind", "avd", *common]) == 0
    assert main(["train-flow", "--encoder", str(out / "vdr.ckpt"), *common]) == 0
    assert main(["rollout", "--model", str(out / "avd.ckpt"), *common]) == 0
    flow = json.loads((out / "flow_train.json").read_text())
    assert len(flow["nll"]) >= 1
    rollouts = json.loads((out / "rollout_train.json").read_text())
    assert rollouts["mean"] == pytest.approx(sum(rollouts["matches"]) / len(rollouts["matches"]))
