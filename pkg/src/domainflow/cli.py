"""Command-line front door: train, gen-synthetic, translate, measure,
boost-train, eval-seg, serve, and the repro meta-command that drives the
desk-scale verification suite end to end.
"""

from __future__ import annotations

import argparse
import dataclasses
import os
import sys
from pathlib import Path

from .config_io import ConfigError, resolve, snapshot_text

RUN_EXTRA_KEYS = ("source_data", "target_data", "run_dir", "experiment")


def _cmd_train(args) -> int:
    from .data import load_manifest
    from .training import TrainConfig, restore, run_training

    config, extras = resolve(
        TrainConfig, file_path=args.config, overrides=args.set, extra_keys=RUN_EXTRA_KEYS
    )
    missing = [k for k in ("source_data", "target_data") if k not in extras]
    if missing:
        raise ConfigError(f"config must set {', '.join(missing)}")
    run_dir = Path(extras.get("run_dir") or f"runs/{extras.get('experiment', 'run')}")
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.txt").write_text(snapshot_text(config, extras))

    source = load_manifest(extras["source_data"]).validate()
    targets = [
        load_manifest(p.strip()).validate()
        for p in str(extras["target_data"]).split(",")
        if p.strip()
    ]
    state = restore(args.resume) if args.resume else None
    run_training(
        config, source, targets, run_dir, state=state,
        progress_every=args.progress_every,
    )
    print(f"run complete: {run_dir / 'checkpoint.pt'}")
    return 0


def _cmd_gen_synthetic(args) -> int:
    from .data import SyntheticStyleSpec, generate_synthetic_domains

    common = dict(
        kind=args.kind,
        geometry_seed=args.geometry_seed,
        count=args.count,
        image_size=args.size,
        blur_sigma=args.blur,
        num_classes=args.classes,
    )
    src, tgt = generate_synthetic_domains(
        SyntheticStyleSpec(theta=args.theta_source, **common),
        SyntheticStyleSpec(theta=args.theta_target, **common),
        args.out,
    )
    print(f"wrote {src.n} source and {tgt.n} target images under {args.out}")
    return 0


def _cmd_translate(args) -> int:
    from .data import load_manifest, translate_dataset
    from .training import load_generator

    if args.z_mode == "uniform":
        z_mode = "uniform"
    elif args.z_mode.startswith("fixed:"):
        z_mode = ("fixed", float(args.z_mode.split(":", 1)[1]))
    else:
        raise ConfigError(f"--z-mode must be 'uniform' or 'fixed:<v>', got {args.z_mode!r}")
    generator, _ = load_generator(args.ckpt)
    manifest = load_manifest(args.input).validate()
    summary = translate_dataset(
        manifest, generator, z_mode=z_mode, seed=args.seed, out_dir=args.out
    )
    print(f"translated {summary.count} images -> {summary.out_dir}")
    if summary.failures:
        print(f"{len(summary.failures)} files failed to decode:", file=sys.stderr)
        for name, why in summary.failures:
            print(f"  {name}: {why}", file=sys.stderr)
    return 0


def _cmd_measure(args) -> int:
    from .data import load_manifest, measure_directory

    manifest = load_manifest(args.data)
    value = measure_directory(manifest, args.kind)
    unit = "deg" if args.kind == "mean-hue" else ""
    print(f"{args.kind} over {manifest.n} images: {value:.3f}{unit}")
    return 0


def _cmd_boost_train(args) -> int:
    from .booster import BoostConfig, boost_train, rows_from_manifest, save_seg
    from .data import load_manifest, read_translation_index

    config, _ = resolve(BoostConfig, file_path=args.config, overrides=args.set)
    if args.source_index:
        index = Path(args.source_index)
        rows = read_translation_index(index)
        source_root = index.parent
    else:
        manifest = load_manifest(args.source_manifest).validate()
        rows = rows_from_manifest(manifest)
        source_root = manifest.root
    target = load_manifest(args.target).validate()
    seg = boost_train(source_root, rows, target, config)
    save_seg(seg, config, args.out)
    print(f"segmentation model saved to {args.out}")
    return 0


def _cmd_eval_seg(args) -> int:
    from .booster import evaluate_miou, load_seg
    from .data import load_manifest

    seg, _ = load_seg(args.ckpt)
    manifest = load_manifest(args.data).validate()
    per_class, miou = evaluate_miou(seg, manifest)
    for c, iou in sorted(per_class.items()):
        print(f"class {c}: IoU {iou:.4f}")
    print(f"mIoU: {miou:.4f}")
    return 0


def _cmd_serve(args) -> int:
    from .service import serve

    port = args.port if args.port is not None else int(os.environ.get("DOMAINFLOW_PORT", 8000))
    serve(args.ckpt, port=port, host=args.host)
    return 0


def _cmd_repro(args) -> int:
    from . import acceptance

    results = acceptance.run_suite(
        quick=args.quick, workspace=args.workspace, fresh=args.fresh
    )
    print(acceptance.format_table(results))
    return 0 if all(r.passed for r in results) else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="domainflow")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a translation model")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", default=None)
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--progress-every", type=int, default=100)
    t.set_defaults(func=_cmd_train)

    g = sub.add_parser("gen-synthetic", help="generate paired synthetic style domains")
    g.add_argument("--theta-source", type=float, required=True)
    g.add_argument("--theta-target", type=float, required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--kind", choices=("hue", "brightness"), default="hue")
    g.add_argument("--count", type=int, default=500)
    g.add_argument("--size", type=int, default=64)
    g.add_argument("--geometry-seed", type=int, default=0)
    g.add_argument("--blur", type=float, default=0.0)
    g.add_argument("--classes", type=int, default=2)
    g.set_defaults(func=_cmd_gen_synthetic)

    tr = sub.add_parser("translate", help="export a translated dataset")
    tr.add_argument("--ckpt", required=True)
    tr.add_argument("--input", required=True)
    tr.add_argument("--z-mode", default="uniform")
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--out", default=None)
    tr.set_defaults(func=_cmd_translate)

    m = sub.add_parser("measure", help="measure a style statistic over a dataset")
    m.add_argument("--kind", choices=("mean-hue", "mean-brightness"), default="mean-hue")
    m.add_argument("data")
    m.set_defaults(func=_cmd_measure)

    b = sub.add_parser("boost-train", help="train segmentation with weighted adversarial branch")
    b.add_argument("--source-index", default=None)
    b.add_argument("--source-manifest", default=None)
    b.add_argument("--target", required=True)
    b.add_argument("--config", default=None)
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    b.add_argument("--out", default="seg.pt")
    b.set_defaults(func=_cmd_boost_train)

    e = sub.add_parser("eval-seg", help="evaluate a segmentation checkpoint")
    e.add_argument("--ckpt", required=True)
    e.add_argument("--data", required=True)
    e.set_defaults(func=_cmd_eval_seg)

    s = sub.add_parser("serve", help="run the inference HTTP service")
    s.add_argument("--ckpt", action="append", required=True)
    s.add_argument("--port", type=int, default=None)
    s.add_argument("--host", default="127.0.0.1")
    s.set_defaults(func=_cmd_serve)

    r = sub.add_parser("repro", help="run the desk-scale verification suite")
    r.add_argument("--quick", action="store_true", help="fast property checks only")
    r.add_argument("--workspace", default=None)
    r.add_argument("--fresh", action="store_true", help="ignore cached artifacts")
    r.set_defaults(func=_cmd_repro)

    return p


def dispatch(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        if args.command == "boost-train" and not (args.source_index or args.source_manifest):
            raise ConfigError("boost-train needs --source-index or --source-manifest")
        return args.func(args) or 0
    except (ConfigError, FileNotFoundError, ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main():
    sys.exit(dispatch())
