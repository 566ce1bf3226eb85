"""``motionfm`` command-line entry point.

Subcommands: gen-data, train, sample, edit, eval, nfe-curve, guidance-sweep,
replay. Every run writes ``manifest.json`` into its output directory; ``replay``
re-executes the recorded argv.

Exit codes: 0 ok, 2 usage/config, 3 I/O or file format, 4 numeric failure.
Failures print a single ``motionfm: error category=<cat>: <message>`` line.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import time
from contextlib import nullcontext
from dataclasses import asdict, fields
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .editing import TASKS, EditConfig, build_mask, rewrite_sample
from .errors import ConfigError, FormatError, MotionFMError, NumericError
from .evaluation import evaluate_generation, guidance_sweep, nfe_curve
from .metrics import NOTICE, FeatureExtractor
from .model import ARCHITECTURES, ModelConfig, load_model
from .motion import (FAMILIES, MotionSequence, PoseLayout, SyntheticDatasetSpec, gen_synthetic_dataset,
                     load_dataset, read_motion, save_dataset, split_dataset, write_motion)
from .numerics.checkpoint import atomic_write
from .sampling import SOLVERS, SamplerConfig, sample
from .training import TrainConfig, train

log = logging.getLogger("motionfm")

EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 2, 3, 4


# ---------------------------------------------------------------- helpers

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, args, argv, started: float, inputs: dict, outputs: list,
                    checkpoint: Optional[Path] = None) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func",)}
    manifest = {
        "command": args.command,
        "argv": list(argv),
        "config": config,
        "seed": args.seed,
        "inputs": {k: str(v) for k, v in inputs.items()},
        "outputs": [str(o) for o in outputs],
        "wall_seconds": round(time.time() - started, 3),
    }
    if checkpoint is not None and checkpoint.exists():
        manifest["checkpoint_sha256"] = _sha256(checkpoint)
    atomic_write(out / "manifest.json", json.dumps(manifest, indent=1, default=str))


def _parse_ints(text: str) -> list[int]:
    try:
        vals = [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _parse_floats(text: str) -> list[float]:
    try:
        vals = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty list")
    return vals


def _data_split(root: Path, split: str) -> list[MotionSequence]:
    sub = root / split
    return load_dataset(sub if sub.is_dir() else root)


def _ckpt_prefix(path: str) -> Path:
    p = Path(path)
    return p / "model" if p.is_dir() else p


def _out_dir(args) -> Path:
    if args.out is None:
        raise ConfigError("--out is required")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _extractor(args, dim: int, data) -> FeatureExtractor:
    if args.extractor == "trained_encoder":
        return FeatureExtractor.trained_encoder(data, args.feature_dim, args.extractor_seed)
    return FeatureExtractor.random_projection(dim, args.feature_dim, args.extractor_seed)


def _write_csv(path: Path, rows: list[dict]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def _dump_trajectory(out: Path, traj, normalizer) -> Path:
    est_dir = out / "x1hat"
    est_dir.mkdir(exist_ok=True)
    lines = []
    for k, est in enumerate(traj.x1_estimates):
        p = est_dir / f"step_{k:04d}.npy"
        np.save(p, normalizer.decode(est))
        lines.append(json.dumps({"step": k, "t": traj.times[k],
                                 "state_norm": float(np.linalg.norm(traj.inputs[k])),
                                 "x1hat_path": str(p.relative_to(out))}))
    path = out / "trajectory.jsonl"
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------- commands

def cmd_gen_data(args, argv, started):
    out = _out_dir(args)
    spec = SyntheticDatasetSpec(args.family, args.joints, args.frames, args.classes,
                                args.samples_per_class, args.seed, args.fps, args.shift, args.noise)
    seqs = gen_synthetic_dataset(spec)
    tr, held = split_dataset(seqs, args.holdout, args.seed)
    save_dataset(out / "train", tr)
    outputs = [out / "train"]
    if held:
        save_dataset(out / "test", held)
        outputs.append(out / "test")
    (out / "dataset.json").write_text(json.dumps({"spec": spec.to_dict(), "holdout": args.holdout,
                                                  "train": len(tr), "test": len(held)}, indent=1))
    _write_manifest(out, args, argv, started, {}, outputs)


def cmd_train(args, argv, started):
    out = _out_dir(args)
    data = _data_split(Path(args.data), "train")
    layout = data[0].layout
    frames = data[0].frames
    classes = max(args.classes or 0, 1 + max((s.condition or 0) for s in data))
    mcfg = ModelConfig(dim=layout.dim, frames=frames, d_model=args.d_model, layers=args.layers,
                       heads=args.heads, d_ff=args.d_ff, classes=classes, cond_dim=args.cond_dim,
                       architecture=args.architecture)
    tcfg = TrainConfig(**{f.name: getattr(args, f.name) for f in fields(TrainConfig)})
    train(data, mcfg, tcfg, out_dir=out)
    _write_manifest(out, args, argv, started, {"data": args.data},
                    [out / "model.mfm", out / "model.json", out / "train_log.csv"], out / "model.mfm")


def cmd_sample(args, argv, started):
    out = _out_dir(args)
    prefix = _ckpt_prefix(args.ckpt)
    model, normalizer = load_model(prefix)
    cfg = SamplerConfig(args.solver, args.steps, args.guidance, args.seed)
    if args.label is not None:
        labels = [args.label] * args.n
    elif args.unconditional:
        labels = None
    else:
        labels = list(np.arange(args.n) % model.config.classes)
    x, traj = sample(model, labels, cfg, n=args.n)
    x = normalizer.decode(x)
    layout = _layout_for(model)
    outputs = []
    for i in range(args.n):
        lab = None if labels is None else int(labels[i])
        p = out / f"sample_{i:04d}.motion"
        write_motion(p, MotionSequence(x[i], layout, lab))
        outputs.append(p)
    if args.trajectory:
        outputs.append(_dump_trajectory(out, traj, normalizer))
    _write_manifest(out, args, argv, started, {"ckpt": prefix.with_suffix(".mfm")}, outputs,
                    prefix.with_suffix(".mfm"))


def _layout_for(model) -> PoseLayout:
    # D = 12 j - 1, see PoseLayout
    j = (model.config.dim + 1) // 12
    layout = PoseLayout(j)
    if layout.dim != model.config.dim:
        raise FormatError(f"model dim {model.config.dim} is not a pose layout dimension")
    return layout


def cmd_edit(args, argv, started):
    out = _out_dir(args)
    prefix = _ckpt_prefix(args.ckpt)
    model, normalizer = load_model(prefix)
    ref = read_motion(args.input)
    if ref.values.shape != (model.config.frames, model.config.dim):
        raise ConfigError(f"input motion shape {ref.values.shape} does not match the model")
    mask = build_mask(args.task, ref.layout, ref.frames, prefix=args.prefix_frames,
                      suffix=args.suffix_frames, stride=args.stride, upper_joints=args.upper_joints or ())
    if args.unconditional:
        label = None
    else:
        label = args.label if args.label is not None else ref.condition
    cfg = EditConfig(args.steps, args.sigma, args.guidance, args.seed)
    edited, traj = rewrite_sample(model, normalizer.encode(ref.values), mask, label, cfg)
    p = out / "edited.motion"
    write_motion(p, MotionSequence(normalizer.decode(edited), ref.layout, label))
    outputs = [p]
    if args.trajectory:
        outputs.append(_dump_trajectory(out, traj, normalizer))
    _write_manifest(out, args, argv, started, {"ckpt": prefix.with_suffix(".mfm"), "input": args.input},
                    outputs, prefix.with_suffix(".mfm"))


def cmd_eval(args, argv, started):
    out = _out_dir(args)
    prefix = _ckpt_prefix(args.ckpt)
    model, normalizer = load_model(prefix)
    held = _data_split(Path(args.data), "test")
    ex = _extractor(args, model.config.dim, held)
    report = evaluate_generation(model, normalizer, held, ex, n=args.n, reps=args.reps,
                                 steps=args.steps, guidance=args.guidance, seed=args.seed)
    p = out / "metrics.json"
    p.write_text(report.to_json())
    if not args.quiet:
        print(NOTICE, file=sys.stderr)
    _write_manifest(out, args, argv, started, {"ckpt": prefix.with_suffix(".mfm"), "data": args.data}, [p],
                    prefix.with_suffix(".mfm"))


def cmd_nfe_curve(args, argv, started):
    out = _out_dir(args)
    prefix = _ckpt_prefix(args.ckpt)
    model, normalizer = load_model(prefix)
    held = _data_split(Path(args.data), "test")
    ex = _extractor(args, model.config.dim, held)
    rows = nfe_curve(model, normalizer, held, args.steps, ex, n=args.n, seed=args.seed,
                     guidance=args.guidance, solver=args.solver)
    p = out / "nfe_curve.csv"
    _write_csv(p, rows)
    _write_manifest(out, args, argv, started, {"ckpt": prefix.with_suffix(".mfm"), "data": args.data}, [p],
                    prefix.with_suffix(".mfm"))


def cmd_guidance_sweep(args, argv, started):
    out = _out_dir(args)
    prefix = _ckpt_prefix(args.ckpt)
    model, normalizer = load_model(prefix)
    held = _data_split(Path(args.data), "test")
    ex = _extractor(args, model.config.dim, held)
    rows = guidance_sweep(model, normalizer, held, args.scales, ex, n=args.n, steps=args.steps, seed=args.seed)
    p = out / "guidance_sweep.csv"
    _write_csv(p, rows)
    _write_manifest(out, args, argv, started, {"ckpt": prefix.with_suffix(".mfm"), "data": args.data}, [p],
                    prefix.with_suffix(".mfm"))


def cmd_replay(args, argv, started):
    try:
        manifest = json.loads(Path(args.manifest).read_text())
        recorded = manifest["argv"]
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad manifest {args.manifest}: {exc}") from None
    code = main(recorded)
    if code:
        raise SystemExit(code)


# ---------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--config", help="JSON file whose keys override flag defaults")
    common.add_argument("--out", help="output directory")
    common.add_argument("--quiet", action="store_true")

    evalopts = argparse.ArgumentParser(add_help=False)
    evalopts.add_argument("--extractor", choices=("random_projection", "trained_encoder"),
                          default="random_projection")
    evalopts.add_argument("--feature-dim", type=int, default=16)
    evalopts.add_argument("--extractor-seed", type=int, default=0)

    parser = argparse.ArgumentParser(prog="motionfm", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", parents=[common], help="write a synthetic dataset")
    p.add_argument("--family", choices=FAMILIES, default="sine-walker")
    p.add_argument("--joints", type=int, default=4)
    p.add_argument("--frames", type=int, default=60)
    p.add_argument("--classes", type=int, default=1)
    p.add_argument("--samples-per-class", type=int, default=100)
    p.add_argument("--fps", type=float, default=20.0)
    p.add_argument("--shift", type=float, default=3.0)
    p.add_argument("--noise", type=float, default=0.25)
    p.add_argument("--holdout", type=float, default=0.2)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", parents=[common], help="train a vector-field model")
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=int, default=TrainConfig.steps)
    p.add_argument("--batch-size", type=int, default=TrainConfig.batch_size)
    p.add_argument("--lr", type=float, default=TrainConfig.lr)
    p.add_argument("--beta1", type=float, default=TrainConfig.beta1)
    p.add_argument("--beta2", type=float, default=TrainConfig.beta2)
    p.add_argument("--weight-decay", type=float, default=TrainConfig.weight_decay)
    p.add_argument("--p-drop", type=float, default=TrainConfig.p_drop)
    p.add_argument("--sigma-min", type=float, default=TrainConfig.sigma_min)
    p.add_argument("--target", choices=("normalized", "literal"), default=TrainConfig.target)
    p.add_argument("--no-normalize", dest="normalize", action="store_false")
    p.add_argument("--architecture", choices=ARCHITECTURES, default="transformer")
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--d-ff", type=int, default=128)
    p.add_argument("--cond-dim", type=int, default=64)
    p.add_argument("--classes", type=int, default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sample", parents=[common], help="generate motions")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=4)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--solver", choices=SOLVERS, default="euler")
    p.add_argument("--guidance", type=float, default=1.0)
    p.add_argument("--label", type=int)
    p.add_argument("--unconditional", action="store_true")
    p.add_argument("--trajectory", action="store_true", help="also dump the sampling trajectory")
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("edit", parents=[common], help="edit a motion by trajectory rewriting")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--task", choices=TASKS, required=True)
    p.add_argument("--prefix-frames", type=int, default=0)
    p.add_argument("--suffix-frames", type=int, default=0)
    p.add_argument("--stride", type=int, default=2)
    p.add_argument("--upper-joints", type=_parse_ints)
    p.add_argument("--sigma", type=float, default=EditConfig.threshold, help="rewriting threshold")
    p.add_argument("--steps", type=int, default=EditConfig.steps)
    p.add_argument("--guidance", type=float, default=EditConfig.guidance)
    p.add_argument("--label", type=int)
    p.add_argument("--unconditional", action="store_true")
    p.add_argument("--trajectory", action="store_true")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("eval", parents=[common, evalopts], help="metric suite against held-out data")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--reps", type=int, default=20)
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--guidance", type=float, default=1.0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("nfe-curve", parents=[common, evalopts], help="FID versus number of sampling steps")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--steps", type=_parse_ints, default=[1, 2, 5, 10, 50, 100])
    p.add_argument("--n", type=int, default=500)
    p.add_argument("--solver", choices=SOLVERS, default="euler")
    p.add_argument("--guidance", type=float, default=1.0)
    p.set_defaults(func=cmd_nfe_curve)

    p = sub.add_parser("guidance-sweep", parents=[common, evalopts], help="metrics versus guidance strength")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--scales", type=_parse_floats, default=[0.0, 1.0, 2.0, 2.5, 3.0, 5.0])
    p.add_argument("--steps", type=int, default=10)
    p.add_argument("--n", type=int, default=500)
    p.set_defaults(func=cmd_guidance_sweep)

    p = sub.add_parser("replay", help="re-run the command recorded in a manifest")
    p.add_argument("manifest")
    p.set_defaults(func=cmd_replay, seed=None, config=None, out=None, quiet=False)
    return parser


def _apply_config(parser: argparse.ArgumentParser, args, argv):
    if not getattr(args, "config", None):
        return args
    try:
        overrides = json.loads(Path(args.config).read_text())
    except ValueError as exc:
        raise FormatError(f"bad --config file: {exc}") from None
    sub = parser._subparsers._group_actions[0].choices[args.command]
    known = {a.dest for a in sub._actions}
    unknown = set(overrides) - known
    if unknown:
        raise ConfigError(f"unknown config keys for {args.command}: {sorted(unknown)}")
    # flags given explicitly on the command line still win
    sub.set_defaults(**overrides)
    return parser.parse_args(argv)


def _thread_limit():
    n = os.environ.get("MFM_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def main(argv: Optional[Sequence[str]] = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    started = time.time()
    try:
        args = _apply_config(parser, args, argv)
        with _thread_limit():
            args.func(args, argv, started)
    except NumericError as exc:
        print(f"motionfm: error category={exc.category}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as exc:
        print(f"motionfm: error category=io: {exc}", file=sys.stderr)
        return EXIT_IO
    except MotionFMError as exc:
        print(f"motionfm: error category={exc.category}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return 0


if __name__ == "__main__":
    sys.exit(main())
