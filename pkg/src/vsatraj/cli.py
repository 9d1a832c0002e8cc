"""Command line entry point ``vsatraj``.

Every subcommand writes its outputs below ``--out-dir`` together with a
``manifest-<command>.json`` listing the argument vector, library versions,
seeds and the SHA-256 of every input and output file.

Exit codes: 0 success, 1 invalid input or configuration, 2 runtime failure.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import platform
import sys
from pathlib import Path

import numpy as np

from . import __version__, dataset, experiments, models, scene, synth

MANIFEST_VERSION = 1
EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2



class CellFailure(RuntimeError):
    pass


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _out(args, name) -> Path:
    """Resolve an output file name inside the output directory."""
    p = Path(name)
    if p.is_absolute() or ".." in p.parts:
        raise ValueError(f"output {name!r} must be a plain path inside --out-dir")
    path = Path(args.out_dir) / p
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def write_manifest(args, inputs, outputs, seeds=None, extra=None) -> Path:
    def files(paths):
        out = {}
        for p in paths:
            p = Path(p)
            if p.is_file():
                out[str(p)] = _sha256(p)
        return out

    manifest = {
        "version": MANIFEST_VERSION,
        "command": args.command,
        "argv": args.argv,
        "package_version": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "seeds": seeds if seeds is not None else ([args.seed] if args.seed is not None else []),
        "inputs": files(inputs),
        "outputs": files(outputs),
    }
    if extra:
        manifest.update(extra)
    path = _out(args, f"manifest-{args.command}.json")
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_synth(args) -> int:
    data = {}
    if args.config:
        cfg = synth.HighwayConfig.from_file(args.config)
        data = cfg.to_dict()
    overrides = {"lanes": args.lanes, "vehicles": args.vehicles, "lane_change_rate": args.lc_rate,
                 "noise_std": args.noise, "velocity_noise_std": args.velocity_noise,
                 "seed": args.seed, "duration": None if args.minutes is None else 60.0 * args.minutes}
    data.update({k: v for k, v in overrides.items() if v is not None})
    cfg = synth.HighwayConfig.from_dict(data)
    tracks = synth.generate(cfg)
    csv_path = synth.export(tracks, _out(args, args.output))
    truth = _out(args, Path(args.output).with_suffix(".truth.json").name)
    truth.write_text(json.dumps(synth.ground_truth(tracks), sort_keys=True) + "\n")
    cfg_path = _out(args, Path(args.output).with_suffix(".config.json").name)
    cfg_path.write_text(json.dumps(cfg.to_dict(), sort_keys=True, indent=1) + "\n")
    rep = dataset.composition_report(dataset.window([g.track for g in tracks], cfg.frame_period,
                                                    stride=args.preview_stride))
    print(rep.table(f"composition preview (stride {args.preview_stride})"))
    print(f"wrote {csv_path} ({len(tracks)} tracks)")
    write_manifest(args, [args.config] if args.config else [], [csv_path, truth, cfg_path], [cfg.seed])
    return EXIT_OK


def cmd_analyze(args) -> int:
    inputs = []
    if args.counts:
        data = json.loads(Path(args.counts).read_text())
        inputs.append(args.counts)
        rep = dataset.CompositionReport.from_counts(data)
        title = data.get("name", "composition")
    else:
        tracks = dataset.load(args.path, args.mapping, frame_period=args.frame_period)
        inputs += [args.path] + ([args.mapping] if args.mapping else [])
        samples = dataset.window(tracks, args.frame_period or dataset.FRAME_PERIOD, stride=args.stride)
        splits = None
        if args.split_seed is not None:
            tr, va = dataset.split(tracks, 0.9, args.split_seed)
            tr = set(tr)
            splits = {"train": [s for s in samples if s.target_id in tr],
                      "validation": [s for s in samples if s.target_id not in tr]}
        rep = dataset.composition_report(samples, splits)
        title = Path(args.path).name
    print(rep.table(title))
    out = _out(args, args.json)
    out.write_text(json.dumps(rep.to_json(), sort_keys=True, indent=1) + "\n")
    write_manifest(args, inputs, [out])
    return EXIT_OK


def cmd_heatmap(args) -> int:
    tracks = dataset.load(args.path, args.mapping)
    samples = dataset.window(tracks, stride=args.stride, label=False)
    if not 0 <= args.sample < len(samples):
        raise ValueError(f"sample index {args.sample} out of range (0..{len(samples) - 1})")
    s = samples[args.sample]
    vocab = scene.Vocabulary.create(args.dimension, args.seed or 0)
    snap = s.anchor_snapshot()
    enc = {"power": scene.encode_scene_power, "power_ego": scene.encode_scene_power_ego}[args.variant]
    vec = enc(snap, vocab, radius=args.radius, scale=args.scale)
    hm = scene.heat_map(vec, vocab, probe=args.probe, step=args.step, target_type=snap.target_type)
    out = _out(args, args.output)
    hm.to_csv(out)
    x, y = hm.argmax()
    print(f"sample {args.sample} (object {s.target_id}, t={s.anchor_time:g} s): probe {hm.probe} peaks at "
          f"x={x:g} m, y={y:g} m")
    write_manifest(args, [args.path], [out], [args.seed or 0])
    return EXIT_OK


def _load_samples(args):
    tracks = dataset.load(args.data, args.mapping)
    samples = dataset.window(tracks, stride=args.stride)
    if args.split_seed is not None:
        tr, va = dataset.split(tracks, 0.9, args.split_seed)
        keep = set(tr if args.side == "train" else va)
        samples = [s for s in samples if s.target_id in keep]
    return dataset.select_subset(samples, args.selector)


def _inputs(args, samples, variant):
    if variant == "lstm_numerical":
        return np.stack([s.history_positions for s in samples]) if samples else np.zeros((0, 20, 2))
    vocab = scene.Vocabulary.create(args.dimension, args.vocab_seed)
    snaps = [sn for s in samples for sn in s.snapshots()]
    enc = scene.encode_snapshots(snaps, vocab, models.ENCODER_VARIANT[variant], args.radius, args.scale)
    return enc.reshape(len(samples), dataset.HISTORY_FRAMES, args.dimension)


def cmd_train(args) -> int:
    samples = _load_samples(args)
    if not samples:
        raise models.NoDataError("selection yields no training samples")
    if args.variant == "linear":
        raise ValueError("the linear baseline has nothing to train")
    X = _inputs(args, samples, args.variant)
    est = models.LSTMTrajectoryRegressor(hidden_size=args.hidden, learning_rate=args.lr, batch_size=args.batch,
                                         epochs=args.epochs, clip_norm=args.clip, weight_decay=args.weight_decay,
                                         seed=args.seed or 0, dtype=args.dtype, variant=args.variant,
                                         verbose=args.verbose > 0)
    est.encoding_ = {"dimension": args.dimension, "vocab_seed": args.vocab_seed,
                     "scale": list(args.scale) if np.ndim(args.scale) else args.scale, "radius": args.radius}
    est.fit(X, models.targets(samples), data_fingerprint_=dataset.fingerprint(args.data))
    out = _out(args, args.output)
    est.save(out)
    log_path = _out(args, Path(args.output).with_suffix(".log.jsonl").name)
    est.log_.write_jsonl(log_path)
    print(f"trained {args.variant} on {len(samples)} samples; final loss {est.log_.train_loss[-1]:.5f}")
    write_manifest(args, [args.data], [out, log_path], [args.seed or 0],
                   {"encoding": est.encoding_})
    return EXIT_OK


def cmd_eval(args) -> int:
    samples = _load_samples(args)
    if args.model == "linear":
        rep = models.evaluate(models.ConstantVelocityRegressor(), samples)
        inputs = [args.data]
    else:
        est = models.LSTMTrajectoryRegressor.load(args.model)
        # the checkpoint's scene encoding overrides the command line
        for k, v in getattr(est, "encoding_", {}).items():
            setattr(args, k, tuple(v) if isinstance(v, list) else v)
        rep = models.evaluate(est, samples, _inputs(args, samples, est.variant) if samples else None)
        inputs = [args.data, args.model]
    print(rep.format())
    out = _out(args, args.output)
    out.write_text(json.dumps(rep.to_json(), sort_keys=True, indent=1) + "\n")
    write_manifest(args, inputs, [out])
    return EXIT_OK


def cmd_run_matrix(args) -> int:
    plan = experiments.ExperimentPlan.from_file(args.plan)
    if args.seed is not None:
        plan.seeds = [args.seed]
    out = Path(args.out_dir)
    jobs = args.jobs or (os.cpu_count() or 1)
    report, stats = experiments.run(plan, out, n_jobs=jobs, verbose=args.verbose > 0)
    print(f"cells trained {stats.trained}, reused {stats.reused}, failed {stats.failed}")
    print(experiments.compare(report, "aggregate").table())
    outputs = [out / "report.json"] + sorted((out / "curves").glob("*.csv"))
    inputs = [args.plan] + ([plan.dataset] if plan.dataset else [])
    write_manifest(args, inputs, outputs, list(plan.seeds),
                   {"data_fingerprint": report.data_fingerprint,
                    "cells": {f"{v}/{s}": c.checkpoints for (v, s), c in sorted(report.cells.items())}})
    if report.failed and not args.allow_partial:
        for c in report.failed:
            print(f"failed cell {c.variant}/{c.setup}: {c.reason}", file=sys.stderr)
        raise CellFailure(f"{len(report.failed)} cell(s) failed")
    return EXIT_OK


def cmd_compare(args) -> int:
    report = experiments.ComparisonReport.load(args.report)
    ranking = experiments.compare(report, args.metric, args.horizon)
    print(ranking.table())
    out = _out(args, args.output)
    out.write_text(json.dumps(ranking.to_json(), sort_keys=True, indent=1) + "\n")
    write_manifest(args, [Path(args.report) / "report.json" if Path(args.report).is_dir() else args.report], [out])
    return EXIT_OK


# ------------------------------------------------------------------ parser

def _scale(text: str):
    parts = [float(p) for p in text.split(",")]
    return parts[0] if len(parts) == 1 else tuple(parts)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0)
    common.add_argument("-o", "--out-dir", default=".", help="directory receiving every output file")
    common.add_argument("--seed", type=int, default=None, help="seed override")
    common.add_argument("--config", default=None, help="configuration file (TOML or JSON)")

    p = argparse.ArgumentParser(prog="vsatraj", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="generate a synthetic highway recording")
    s.add_argument("--lanes", type=int)
    s.add_argument("--vehicles", type=int)
    s.add_argument("--minutes", type=float)
    s.add_argument("--lc-rate", type=float, help="lane changes per vehicle per minute")
    s.add_argument("--noise", type=float, help="position noise std (m)")
    s.add_argument("--velocity-noise", type=float, help="velocity noise std (m/s)")
    s.add_argument("--output", default="recording.csv")
    s.add_argument("--preview-stride", type=int, default=4)
    s.set_defaults(func=cmd_synth)

    a = sub.add_parser("analyze", parents=[common], help="composition report of a recording")
    a.add_argument("path", nargs="?")
    a.add_argument("--mapping", help="column-mapping JSON")
    a.add_argument("--counts", help="pre-labelled count fixture (JSON) instead of a recording")
    a.add_argument("--frame-period", type=float)
    a.add_argument("--stride", type=int, default=1)
    a.add_argument("--split-seed", type=int)
    a.add_argument("--json", default="composition.json")
    a.set_defaults(func=cmd_analyze)

    h = sub.add_parser("heatmap", parents=[common], help="similarity heat map of one sample's scene")
    h.add_argument("path")
    h.add_argument("--sample", type=int, default=0)
    h.add_argument("--probe", default="target", help="'target' or an object type")
    h.add_argument("--variant", choices=("power", "power_ego"), default="power")
    h.add_argument("--dimension", type=int, default=512)
    h.add_argument("--scale", type=_scale, default=1.0)
    h.add_argument("--radius", type=float, default=scene.DEFAULT_RADIUS)
    h.add_argument("--step", type=float, default=0.5)
    h.add_argument("--stride", type=int, default=1)
    h.add_argument("--mapping")
    h.add_argument("--output", default="heatmap.csv")
    h.set_defaults(func=cmd_heatmap)

    def data_args(q):
        q.add_argument("--data", required=True, help="object-list CSV")
        q.add_argument("--mapping")
        q.add_argument("--selector", choices=dataset.SELECTORS, default="all")
        q.add_argument("--split-seed", type=int)
        q.add_argument("--stride", type=int, default=1)
        q.add_argument("--dimension", type=int, default=512)
        q.add_argument("--vocab-seed", type=int, default=0)
        q.add_argument("--scale", type=_scale, default=1.0)
        q.add_argument("--radius", type=float, default=scene.DEFAULT_RADIUS)

    t = sub.add_parser("train", parents=[common], help="train one LSTM variant")
    data_args(t)
    t.add_argument("--variant", choices=models.MODEL_VARIANTS, default="lstm_numerical")
    t.add_argument("--hidden", type=int, default=128)
    t.add_argument("--epochs", type=int, default=20)
    t.add_argument("--lr", type=float, default=1e-3)
    t.add_argument("--batch", type=int, default=64)
    t.add_argument("--clip", type=float, default=5.0)
    t.add_argument("--weight-decay", type=float, default=0.0)
    t.add_argument("--dtype", choices=("float64", "float32"), default="float64")
    t.add_argument("--output", default="model.npz")
    t.set_defaults(func=cmd_train, side="train")

    e = sub.add_parser("eval", parents=[common], help="per-horizon RMSE of a model")
    data_args(e)
    e.add_argument("--model", default="linear", help="checkpoint path or 'linear'")
    e.add_argument("--output", default="eval.json")
    e.set_defaults(func=cmd_eval, side="validation")

    r = sub.add_parser("run-matrix", parents=[common], help="run or resume an experiment plan")
    r.add_argument("--plan", required=True)
    r.add_argument("--jobs", type=int, default=0, help="parallel cells (default: CPU count)")
    r.add_argument("--allow-partial", action="store_true")
    r.set_defaults(func=cmd_run_matrix)

    c = sub.add_parser("compare", parents=[common], help="rank models per setup")
    c.add_argument("--report", required=True, help="report.json or a run directory")
    c.add_argument("--metric", choices=experiments.METRICS, default="rmse_y")
    c.add_argument("--horizon", type=float, default=5.0)
    c.add_argument("--output", default="ranking.json")
    c.set_defaults(func=cmd_compare)
    return p


INVALID = (ValueError, KeyError, FileNotFoundError, IsADirectoryError)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = argv
    logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.command == "analyze" and not (args.path or args.counts):
        parser.error("analyze needs a recording path or --counts")
    try:
        return args.func(args)
    except (models.TrainingDivergedError, models.NumericOverflowError, CellFailure) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except INVALID as exc:
        # DatasetError, SchemaError, ConfigError, ModelError, PlanError and
        # HRRError all derive from ValueError
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
