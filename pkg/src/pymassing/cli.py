import argparse
import logging
import sys
from logging import getLogger
from pathlib import Path
from typing import Any, Dict, List, Sequence

import msgspec
import numpy as np

import pymassing._util
import pymassing.configuration
from pymassing.autocomplete import RolloutConfig, export_rollouts, rollout_all, rollout_latents, sequence_latents
from pymassing.dataset.generate import generate, load_dataset
from pymassing.dataset.ops import Bucket, far_histogram, length_histogram, rooms_per_floor_histogram
from pymassing.dataset.records import SequenceRecord
from pymassing.dataset.sequence import from_record, subsample
from pymassing.defaults import RunConfig, ServiceConfig
from pymassing.errors import MassingError, UsageError
from pymassing.evaluate.fid import group_by_step, sequential_fid
from pymassing.evaluate.preference import corrupted_embeddings, flow_preference, preference_experiment, vae_preference
from pymassing.flow.realnvp import flow_for, load_flow, save_flow, train_flow
from pymassing.gym.env import BuildingGym
from pymassing.models.sequence import ModelKind, ModelSpec, SequenceModel, load_model, save_model
from pymassing.models.train import reconstruction_accuracy, record_embeddings, train
from pymassing.neural.layers import AttentionConfig
from pymassing.service.app import serve
from pymassing.voxel import state_diff

logger = getLogger(__name__)


def _out(args: argparse.Namespace, config: RunConfig) -> Path:
    path = Path(args.out or config.out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _data(args: argparse.Namespace, config: RunConfig) -> Path:
    return Path(args.data or config.dataset.path)


def _gym(config: RunConfig) -> BuildingGym:
    return BuildingGym.from_config(config)


def write_tsv(path: Path, header: Sequence[str], rows: Sequence[Sequence[Any]]) -> None:
    lines = ["\t".join(header)]
    for row in rows:
        lines.append("\t".join(f"{v:.6f}" if isinstance(v, float) else str(v) for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.info("Wrote %s", path)


def write_json(path: Path, obj: Any) -> None:
    path.write_bytes(msgspec.json.format(msgspec.json.encode(obj), indent=2) + b"\n")
    logger.info("Wrote %s", path)


def _buckets(path: Path, buckets: List[Bucket]) -> None:
    write_tsv(path, ("low", "high", "count"), [(b.low, b.high, b.count) for b in buckets])


def model_spec(kind: ModelKind, config: RunConfig, input_dim: int, seed: int, layers: int | None = None, heads: int | None = None) -> ModelSpec:
    m = config.model
    attention = AttentionConfig(input_dim=input_dim, model_dim=m.model_dim, layers=layers or m.layers, heads=heads or m.heads, max_len=m.max_len)
    return ModelSpec(kind=kind, attention=attention, beta=m.beta, seed=seed)


def _split(args: argparse.Namespace, config: RunConfig) -> tuple[List[SequenceRecord], List[SequenceRecord]]:
    _, train_records, eval_records = load_dataset(_data(args, config))
    if not train_records:
        raise UsageError(f"Dataset in {_data(args, config)} has no training sequences")
    return train_records, eval_records


def _embed(records: Sequence[SequenceRecord], config: RunConfig) -> List[np.ndarray]:
    return record_embeddings(records, config.dataset.max_subsampled_len, _gym(config))


def cmd_gen(args: argparse.Namespace, config: RunConfig) -> None:
    out = Path(args.out or config.dataset.path)
    n = args.n if args.n is not None else config.dataset.n
    if n <= 0:
        raise UsageError(f"Number of episodes must be positive, got {n}")
    manifest = generate(n, config.seed, out, config)
    print(f"generated {manifest.counts.total} of {manifest.requested} sequences ({manifest.counts.train} train, {manifest.counts.eval} eval) in {out}")


def cmd_train(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    kind = ModelKind(args.kind)
    train_records, _ = _split(args, config)
    sequences = _embed(train_records, config)
    model = SequenceModel(model_spec(kind, config, sequences[0].shape[-1], config.seed))
    result = train(model, sequences, config.train, config.seed)
    save_model(model, out / f"{kind.value}.ckpt")
    write_tsv(out / f"{kind.value}_loss.tsv", ("epoch", "loss"), list(enumerate(result.losses)))
    write_json(out / f"{kind.value}_train.json", result)
    print(f"trained {kind.value} for {result.epochs} epochs, final loss {result.losses[-1]:.6f}")


def cmd_train_flow(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    encoder = load_model(args.encoder)
    train_records, _ = _split(args, config)
    latents = np.stack([sequence_latents(encoder, s)[-1] for s in _embed(train_records, config)])
    flow = flow_for(encoder.config.model_dim, config.flow, config.seed)
    result = train_flow(flow, latents, config.flow, config.seed)
    save_flow(flow, out / "flow.ckpt")
    write_tsv(out / "flow_nll.tsv", ("epoch", "nll"), list(enumerate(result.nll)))
    write_json(out / "flow_train.json", result)
    print(f"trained flow on {latents.shape[0]} latents, final nll {result.nll[-1]:.6f}")


def _at(curve: List[float], t: int) -> float:
    return curve[t] if t < len(curve) else float("nan")


def cmd_eval_recon(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    model = load_model(args.model)
    train_records, eval_records = _split(args, config)
    train_seqs, eval_seqs = _embed(train_records, config), _embed(eval_records, config)
    train_report = reconstruction_accuracy(model, train_seqs)
    eval_report = reconstruction_accuracy(model, eval_seqs)
    steps = max(len(train_report.curve), len(eval_report.curve))
    write_tsv(out / "recon.tsv", ("t", "train", "eval"), [(t, _at(train_report.curve, t), _at(eval_report.curve, t)) for t in range(steps)])
    write_json(out / "recon.json", {"train": train_report, "eval": eval_report})
    print(f"reconstruction accuracy train {train_report.mean:.4f} +- {train_report.std:.4f}, eval {eval_report.mean:.4f} +- {eval_report.std:.4f}")

    if args.ablation:
        rows = []
        epochs = config.evaluation.ablation_epochs
        hyper = msgspec.structs.replace(config.train, epochs=epochs)
        for layers in config.evaluation.ablation_layers:
            for heads in config.evaluation.ablation_heads:
                candidate = SequenceModel(model_spec(ModelKind.VDR, config, train_seqs[0].shape[-1], config.seed, layers, heads))
                train(candidate, train_seqs, hyper, config.seed)
                report = reconstruction_accuracy(candidate, train_seqs)
                rows.append((layers, heads, report.mean, report.std))
                print(f"layers {layers} heads {heads}: train accuracy {report.mean:.4f} +- {report.std:.4f}")
        write_tsv(out / "ablation.tsv", ("layers", "heads", "train_mean", "train_std"), rows)


def _horizons(args: argparse.Namespace, config: RunConfig) -> List[int]:
    if args.H_mode == "percent":
        return list(config.evaluation.horizons_percent)
    return list(config.evaluation.horizons_absolute)


def cmd_eval_pref(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    encoder = load_model(args.encoder)
    flow = load_flow(args.flow)
    _, eval_records = _split(args, config)
    records = eval_records[: config.evaluation.pairs]
    if not records:
        raise UsageError("Preference evaluation needs evaluation sequences")
    max_len = config.dataset.max_subsampled_len
    horizons = _horizons(args, config)

    scorers = {"flow": lambda a, b: flow_preference(encoder, flow, a, b)}
    if args.vae:
        vae = load_model(args.vae)
        scorers["vae"] = lambda a, b: vae_preference(vae, a, b)
    table: Dict[str, list] = {}
    for name, scorer in scorers.items():
        table[name] = preference_experiment(scorer, records, horizons, config.seed, args.H_mode, config.evaluation.reruns, max_len, _gym(config))

    header = ["H"] + [f"{name}_{stat}" for name in table for stat in ("mean", "std")]
    rows = []
    for i, h in enumerate(horizons):
        row: List[Any] = [h]
        for name in table:
            row.extend([table[name][i].accuracy, table[name][i].std])
        rows.append(row)
    write_tsv(out / "preference.tsv", header, rows)
    write_json(out / "preference.json", table)
    for row in rows:
        print("\t".join(f"{v:.3f}" if isinstance(v, float) else str(v) for v in row))


def _prefixes(records: Sequence[SequenceRecord], config: RunConfig, count: int):
    sequences = [subsample(from_record(r, gym=_gym(config)), config.dataset.max_subsampled_len) for r in records[:count]]
    usable = [s for s in sequences if len(s) >= config.rollout.prefix_len]
    return usable, [list(s.states[: config.rollout.prefix_len]) for s in usable]


def cmd_rollout(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    model = load_model(args.model)
    train_records, eval_records = _split(args, config)
    records = train_records if args.split == "train" else eval_records
    truth, prefixes = _prefixes(records, config, config.rollout.count)
    if not prefixes:
        raise UsageError(f"No {args.split} sequence is long enough for a prefix of {config.rollout.prefix_len}")
    settings = RolloutConfig(prefix_len=config.rollout.prefix_len, horizon=config.rollout.horizon, checkpoint=args.model)
    rollouts = rollout_all(model, prefixes, settings, [s.constraints for s in truth], config.dataset.workers)
    export_rollouts(rollouts, out / f"rollouts_{args.split}.ndjson", [pymassing._util.derive_seed(config.seed, i) for i in range(len(rollouts))])
    matches = [state_diff(r.states[-1], s.states[-1]) for r, s in zip(rollouts, truth)]
    write_tsv(out / f"rollout_{args.split}.tsv", ("index", "final_state_match"), list(enumerate(matches)))
    write_json(out / f"rollout_{args.split}.json", {"matches": [float(m) for m in matches], "mean": float(np.mean(matches))})
    print(f"{len(rollouts)} rollouts of {settings.horizon} states, mean final state match {np.mean(matches):.4f}")


def cmd_eval_fid(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    encoder = load_model(args.encoder)
    avd = load_model(args.model)
    train_records, _ = _split(args, config)
    eps, covariance = config.evaluation.fid_eps, config.evaluation.covariance
    max_len = config.dataset.max_subsampled_len

    reference = group_by_step([sequence_latents(encoder, s) for s in _embed(train_records, config)])
    truth, prefixes = _prefixes(train_records, config, config.rollout.count)
    settings = RolloutConfig(prefix_len=config.rollout.prefix_len, horizon=config.rollout.horizon, checkpoint=args.model)
    rollouts = rollout_all(avd, prefixes, settings, [s.constraints for s in truth], config.dataset.workers)
    curves = {"avd": sequential_fid(reference, rollout_latents(encoder, rollouts), eps, covariance)}

    records = train_records[: config.rollout.count]
    for h in _horizons(args, config):
        latents = []
        for i, record in enumerate(records):
            horizon = h if args.H_mode == "absolute" else int(round(h / 100 * len(record.actions)))
            embeddings = corrupted_embeddings(record, horizon, pymassing._util.derive_seed(config.seed, i, horizon), max_len, _gym(config))
            latents.append(sequence_latents(encoder, embeddings))
        curves[f"H{h}"] = sequential_fid(reference, group_by_step(latents), eps, covariance)

    steps = min(len(c) for c in curves.values())
    write_tsv(out / "fid.tsv", ["t", *curves], [[t, *(c[t] for c in curves.values())] for t in range(steps)])
    write_json(out / "fid.json", curves)
    for name, curve in curves.items():
        print(f"{name}: mean f_t {np.mean(curve[:steps]):.4f} over {steps} steps")


def cmd_hist(args: argparse.Namespace, config: RunConfig) -> None:
    out = _out(args, config)
    train_records, eval_records = _split(args, config)
    records = train_records + eval_records
    finals = [from_record(r, gym=_gym(config)).states[-1] for r in records]
    histograms = {
        "length": length_histogram(records, config.dataset.histogram_bucket),
        "far": far_histogram(finals),
        "rooms_per_floor": rooms_per_floor_histogram(finals),
    }
    for name, buckets in histograms.items():
        _buckets(out / f"hist_{name}.tsv", buckets)
    write_json(out / "hist.json", histograms)
    lengths = [r.raw_len for r in records]
    print(f"{len(records)} sequences, length min {min(lengths)} mean {np.mean(lengths):.1f} max {max(lengths)}")


def cmd_serve(args: argparse.Namespace, config: RunConfig) -> None:
    overrides: Dict[str, Any] = {
        "avd_checkpoint": args.avd,
        "encoder_checkpoint": args.encoder,
        "flow_checkpoint": args.flow,
        "static_dir": args.static,
        "host": args.host,
        "port": args.port,
    }
    service: ServiceConfig = msgspec.structs.replace(config.service, **{k: v for k, v in overrides.items() if v is not None})
    serve(msgspec.structs.replace(config, service=service))


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--seed", type=int, help="Master seed, overrides the config")
    common.add_argument("--out", help="Output directory")
    common.add_argument("--scale", choices=("desk", "paper", "full"), help="Preset the config file is applied on, full is an alias of paper")
    common.add_argument("-l", "--log-level", default="INFO", help="Log level")

    parser = argparse.ArgumentParser(prog="pymassing", description="Volumetric building design sequences: generation, models and evaluation")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("gen", parents=[common], help="Generate the expert dataset")
    gen.add_argument("--n", type=int, help="Number of episodes")
    gen.set_defaults(func=cmd_gen)

    data = argparse.ArgumentParser(add_help=False)
    data.add_argument("--data", help="Dataset directory")

    t = sub.add_parser("train", parents=[common, data], help="Train a sequence model")
    t.add_argument("--kind", choices=[k.value for k in ModelKind], required=True)
    t.set_defaults(func=cmd_train)

    tf = sub.add_parser("train-flow", parents=[common, data], help="Train the flow on frozen encoder latents")
    tf.add_argument("--encoder", required=True, help="VDR checkpoint")
    tf.set_defaults(func=cmd_train_flow)

    er = sub.add_parser("eval-recon", parents=[common, data], help="Reconstruction accuracy per step")
    er.add_argument("--model", required=True)
    er.add_argument("--ablation", action="store_true", help="Also train and report the layers x heads grid")
    er.set_defaults(func=cmd_eval_recon)

    ep = sub.add_parser("eval-pref", parents=[common, data], help="Preference accuracy against corrupted sequences")
    ep.add_argument("--encoder", required=True)
    ep.add_argument("--flow", required=True)
    ep.add_argument("--vae", help="Also evaluate the VAE distance baseline")
    ep.add_argument("--H-mode", dest="H_mode", choices=("percent", "absolute"), default="percent")
    ep.set_defaults(func=cmd_eval_pref)

    ro = sub.add_parser("rollout", parents=[common, data], help="Autocomplete dataset prefixes")
    ro.add_argument("--model", required=True, help="AVD checkpoint")
    ro.add_argument("--split", choices=("train", "eval"), default="train")
    ro.set_defaults(func=cmd_rollout)

    ef = sub.add_parser("eval-fid", parents=[common, data], help="Sequential FID of rollouts and corrupted sequences")
    ef.add_argument("--encoder", required=True)
    ef.add_argument("--model", required=True, help="AVD checkpoint")
    ef.add_argument("--H-mode", dest="H_mode", choices=("percent", "absolute"), default="percent")
    ef.set_defaults(func=cmd_eval_fid)

    hi = sub.add_parser("hist", parents=[common, data], help="Length, FAR and rooms per floor histograms")
    hi.set_defaults(func=cmd_hist)

    se = sub.add_parser("serve", parents=[common], help="HTTP API and UI")
    se.add_argument("--avd")
    se.add_argument("--encoder")
    se.add_argument("--flow")
    se.add_argument("--static", help="Directory of the built UI bundle")
    se.add_argument("--host")
    se.add_argument("--port", type=int)
    se.set_defaults(func=cmd_serve)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())
    try:
        config = pymassing.configuration.load_config(args.config, args.scale, args.seed)
        args.func(args, config)
    except MassingError as e:
        logger.error("%s: %s", type(e).__name__, e)
        return e.exit_code
    except OSError as e:
        logger.error("I/O error: %s", e)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
