"""doorslam command line: synth, train, eval, simulate, listen."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import config as cfgmod
from .evaluation import build_training_set, load_clips, noise_sweep, split_dataset
from .formats import AudioFormatError
from .model import EpochStats, default_spec, load_model, save_model, train
from .simulate import build_scenario, parse_events
from .synth import MANIFEST_NAME, DatasetManifest, gen_dataset
from .trigger import run_device
from .wire import encode, frame_stream_decode, make_frame

# command-line flag -> config key; flags left unset fall back to the file, then defaults
FLAG_KEYS = {
    "n": "synth.n_per_class",
    "seed": None,  # per-subcommand, see SEED_KEYS
    "epochs": "train.epochs",
    "lr": "train.learning_rate",
    "batch_size": "train.batch_size",
    "ratios": "eval.ratios",
    "duration": "sim.duration_s",
    "events": "sim.events",
    "background": "sim.background",
    "noise_ratio": "sim.noise_ratio",
    "device_id": "sim.device_id",
    "threshold": "trigger.threshold_g",
}
SEED_KEYS = {"synth": "synth.seed", "train": "train.rng_seed", "eval": "eval.noise_seed", "simulate": "sim.seed"}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat section.key = value config file")
    common.add_argument(
        "--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config key"
    )

    p = argparse.ArgumentParser(prog="doorslam", description="Door-slam detection pipeline at desk scale.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic WAV+CSV dataset")
    s.add_argument("--n", type=int, help="clips per class")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", type=Path, required=True)

    t = sub.add_parser("train", parents=[common], help="train the CNN on a manifest's training split")
    t.add_argument("--manifest", type=Path, required=True)
    t.add_argument("--out", type=Path, required=True, help="model JSON path")
    t.add_argument("--epochs", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--seed", type=int)
    t.add_argument("--no-augment", action="store_true", help="train on clean clips only")

    e = sub.add_parser("eval", parents=[common], help="noise-robustness sweep on the held-out split")
    e.add_argument("--model", type=Path, required=True)
    e.add_argument("--manifest", type=Path, required=True)
    e.add_argument("--ratios", help="comma-separated noise ratios, e.g. 0,0.5")
    e.add_argument("--seed", type=int, help="background noise seed")
    e.add_argument("--out", type=Path, help="write the JSON report here instead of stdout")
    e.add_argument("--csv", type=Path, help="also write a ratio,accuracy,tp,tn,fp,fn summary")

    m = sub.add_parser("simulate", parents=[common], help="run the device loop over a synthetic scenario")
    m.add_argument("--model", type=Path, required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--duration", type=float)
    m.add_argument("--events", help="e.g. slam@5,slam@25,normal@45")
    m.add_argument("--background", choices=["white", "hum", "babble", "none"])
    m.add_argument("--noise-ratio", type=float)
    m.add_argument("--device-id", type=int)
    m.add_argument("--threshold", type=float, help="trigger threshold in g")
    m.add_argument("--log", type=Path, required=True, help="JSON-lines event log output")
    m.add_argument("--frames", type=Path, required=True, help="binary frame file output")

    li = sub.add_parser("listen", help="decode a frame file into an event table")
    li.add_argument("frames", type=Path)
    li.add_argument("--jsonl", action="store_true", help="print JSON lines instead of a table")
    return p


def resolve_config(args) -> cfgmod.RunConfig:
    file_values = cfgmod.load_config_file(args.config) if getattr(args, "config", None) else {}
    overrides = {}
    for item in getattr(args, "set", []):
        key, sep, value = item.partition("=")
        if not sep:
            raise cfgmod.ConfigError(f"--set expects SECTION.KEY=VALUE, got {item!r}")
        overrides[key.strip()] = cfgmod.parse_value(value.strip())
    for flag, key in FLAG_KEYS.items():
        value = getattr(args, flag, None)
        if value is None:
            continue
        if flag == "seed":
            key = SEED_KEYS[args.command]
        overrides[key] = value
    if getattr(args, "no_augment", False):
        overrides["augment.noisy_copies"] = 0
    return cfgmod.resolve(file_values, overrides)


def _load_manifest(path: Path) -> DatasetManifest:
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    return DatasetManifest.load(path)


def cmd_synth(args, rc: cfgmod.RunConfig) -> int:
    gen_dataset(rc.synth.n_per_class, rc.synth.seed, args.out)
    print(args.out / MANIFEST_NAME)
    return 0


def cmd_train(args, rc: cfgmod.RunConfig) -> int:
    manifest = _load_manifest(args.manifest)
    train_items, _ = split_dataset(manifest, rc.eval.test_fraction, rc.eval.split_seed)
    augment = rc.augment if rc.augment.noisy_copies > 0 else None
    dataset = build_training_set(load_clips(manifest, train_items), rc.dsp, augment, rc.train.rng_seed)
    spec = default_spec((1,) + dataset[0][0].values.shape, rc.model.time_pool)

    def report(stats: EpochStats):
        print(f"epoch {stats.epoch}/{rc.train.epochs} loss={stats.mean_loss:.6f} accuracy={stats.accuracy:.4f}", flush=True)

    weights, _ = train(spec, dataset, rc.train, on_epoch=report)
    save_model(args.out, spec, weights)
    print(f"saved {args.out}", file=sys.stderr)
    return 0


def cmd_eval(args, rc: cfgmod.RunConfig) -> int:
    if not args.model.exists():
        raise FileNotFoundError(f"model not found: {args.model}")
    spec, weights = load_model(args.model)
    manifest = _load_manifest(args.manifest)
    _, test_items = split_dataset(manifest, rc.eval.test_fraction, rc.eval.split_seed)
    test_set = load_clips(manifest, test_items)
    report = noise_sweep(
        spec,
        weights,
        test_set,
        rc.eval.ratios,
        rc.eval.noise_kinds,
        rc.dsp,
        rc.eval.noise_seed,
        split_seed=rc.eval.split_seed,
        model_ref=str(args.model),
    )
    if args.out:
        args.out.write_text(report.to_json() + "\n")
    else:
        print(report.to_json())
    if args.csv:
        args.csv.write_text(report.to_csv())
    return 0


def cmd_simulate(args, rc: cfgmod.RunConfig) -> int:
    if not args.model.exists():
        raise FileNotFoundError(f"model not found: {args.model}")
    spec, weights = load_model(args.model)
    sim = rc.sim
    scenario = build_scenario(
        parse_events(sim.events), sim.duration_s, sim.seed, sim.background, sim.noise_ratio, rc.trigger
    )
    detections = run_device(scenario.accel, scenario.audio, spec, weights, rc.trigger, rc.dsp, sim.window_hop_s)
    lines, frames = [], []
    for seq, det in enumerate(detections):
        record = det.to_dict()
        record.update(device_id=sim.device_id, seq=seq)
        lines.append(json.dumps(record, sort_keys=True))
        frames.append(
            encode(make_frame(sim.device_id, seq, det.trigger_t_s, det.label, det.confidence, det.peak_accel_g))
        )
    args.log.write_text("".join(line + "\n" for line in lines))
    args.frames.write_bytes(b"".join(frames))
    print(f"{len(detections)} event(s) -> {args.log}, {args.frames}", file=sys.stderr)
    return 0


def cmd_listen(args, rc=None) -> int:
    data = args.frames.read_bytes()
    frames, diag = frame_stream_decode(data)
    labels = ("normal", "slam")
    if args.jsonl:
        for f in frames:
            print(
                json.dumps(
                    {
                        "device_id": f.device_id,
                        "seq": f.seq,
                        "trigger_t_s": f.timestamp_ms / 1000.0,
                        "label": labels[f.label],
                        "confidence": f.confidence,
                        "peak_accel_g": f.peak_accel_g,
                    },
                    sort_keys=True,
                )
            )
    else:
        print(f"{'device':>6} {'seq':>5} {'time_s':>9} {'label':<6} {'conf':>5} {'peak_g':>7}")
        for f in frames:
            print(
                f"{f.device_id:>6} {f.seq:>5} {f.timestamp_ms / 1000:>9.3f} {labels[f.label]:<6} "
                f"{f.confidence:>5.3f} {f.peak_accel_g:>7.3f}"
            )
    if diag.skipped_bytes:
        print(f"skipped {diag.skipped_bytes} byte(s) while resynchronizing", file=sys.stderr)
        for msg in diag.messages:
            print(f"  {msg}", file=sys.stderr)
    return 0


COMMANDS = {"synth": cmd_synth, "train": cmd_train, "eval": cmd_eval, "simulate": cmd_simulate, "listen": cmd_listen}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        rc = resolve_config(args) if args.command != "listen" else None
        return COMMANDS[args.command](args, rc)
    except (ValueError, OSError, AudioFormatError) as exc:
        print(f"doorslam {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
