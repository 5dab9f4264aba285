"""
Command-line entry points.
"""
import argparse
import csv
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np
from pydantic import ValidationError

from compress import (
    equivalence_check,
    prune_report,
    strip_and_rewire,
    summarize,
    time_generation,
)
from harness.checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from harness.config import RunConfig
from harness.dataset import resolve_dataset, save_dataset, synth_dataset
from harness.gradcheck_suite import run_gradcheck
from harness.sampling import generate, interpolate_class, interpolate_z, sample_noise, save_grid
from models.factory import build_discriminator, build_generator
from pruning.mask import BinarizationIncompleteError
from training.config import ABLATIONS
from training.trainer import teacher_train, train_loop
from utils.config import settings
from utils.logging import logger, setup_logging

SWEEP_ALPHAS = (0.5, 0.6, 0.7, 0.8)


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run configuration")
    parser.add_argument("--seed", type=int, help="Override the training seed")
    parser.add_argument("--out", default=settings.PPCD_OUTPUT_DIR, help="Output directory")


def _training(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--epochs", type=int, help="Override the number of epochs")
    parser.add_argument("--dataset", help="Dataset .npz written by synth-data")


def _pruning(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--alpha", type=float, help="Compression ratio threshold")
    parser.add_argument("--ablation", choices=ABLATIONS, help="Training ablation mode")
    parser.add_argument("--teacher", help="Teacher checkpoint written by teacher-train")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ppcd",
        description="Progressive pruning and class-aware distillation for conditional GAN generators",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("teacher-train", help="Train the wide unmasked teacher generator")
    _common(p)
    _training(p)

    p = sub.add_parser("train", help="Train the prunable student")
    _common(p)
    _training(p)
    _pruning(p)

    p = sub.add_parser("compress", help="Export a trained student without masks and dead channels")
    _common(p)
    p.add_argument("--checkpoint", help="Student checkpoint (default: OUT/student.ppcd)")
    p.add_argument("--trials", type=int, default=100, help="Random (z, class) pairs for the equivalence check")
    p.add_argument("--tol", type=float, help="Equivalence tolerance (default 1e-5, or 1e-10 for 64-bit models)")

    p = sub.add_parser("generate", help="Write sample or interpolation grids")
    _common(p)
    p.add_argument("--checkpoint", required=True, help="Generator checkpoint")
    p.add_argument("--interpolate", choices=("z", "class"), help="Interpolate noise or class condition")
    p.add_argument("--steps", type=int, default=8, help="Images per interpolation")
    p.add_argument("--classes", type=int, nargs=2, default=(0, 1), metavar=("A", "B"),
                   help="Class pair for class interpolation")
    p.add_argument("--label", type=int, default=0, help="Class used for noise interpolation")
    p.add_argument("--count", type=int, default=4, help="Samples per class without --interpolate")

    p = sub.add_parser("count", help="Report parameter and MAC totals")
    _common(p)
    p.add_argument("--checkpoint", help="Count a saved generator instead of the configured one")
    p.add_argument("--time", action="store_true", help="Also time generation of a batch of 64")

    p = sub.add_parser("gradcheck", help="Verify gradients against finite differences")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-4, help="Relative error tolerance")

    p = sub.add_parser("sweep-alpha", help="Train and export once per compression threshold")
    _common(p)
    _training(p)
    _pruning(p)
    p.add_argument("--alphas", type=float, nargs="+", default=list(SWEEP_ALPHAS), help="Thresholds to sweep")

    p = sub.add_parser("synth-data", help="Write the synthetic dataset and its class-mean grid")
    _common(p)
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    run = RunConfig.load(args.config) if args.config else RunConfig()
    seed = args.seed
    if seed is None and not args.config:
        seed = settings.PPCD_SEED
    return run.with_overrides(
        seed=seed,
        alpha=getattr(args, "alpha", None),
        ablation=getattr(args, "ablation", None),
        epochs=getattr(args, "epochs", None),
    )


def _dataset(run: RunConfig, args: argparse.Namespace):
    ds = run.dataset
    return resolve_dataset(getattr(args, "dataset", None) or ds.path, ds.seed, ds.num_classes, ds.image_size,
                           ds.n_per_class)


def _load_teacher(run: RunConfig, args: argparse.Namespace):
    if not run.train.uses_cd:
        return None
    if not args.teacher:
        raise ValueError(f"ablation {run.train.ablation} needs --teacher (run teacher-train first)")
    teacher, _ = load_checkpoint(args.teacher)
    return teacher


def cmd_teacher_train(args: argparse.Namespace) -> int:
    run = _run_config(args)
    out = Path(args.out)
    run.save(out / "config.json")
    result = teacher_train(run, _dataset(run, args), out)
    print(f"teacher checkpoint: {result.checkpoint}")
    return 0


def cmd_train(args: argparse.Namespace) -> int:
    run = _run_config(args)
    out = Path(args.out)
    run.save(out / "config.json")
    result = train_loop(run, _dataset(run, args), out, teacher=_load_teacher(run, args))
    masks = result.generator.masks()
    print(f"student checkpoint: {result.checkpoint}")
    print(f"metrics: {result.metrics}")
    print(f"frozen masks: {sum(m.frozen for m in masks)}/{len(masks)}")
    return 0


def cmd_compress(args: argparse.Namespace) -> int:
    out = Path(args.out)
    path = Path(args.checkpoint) if args.checkpoint else out / "student.ppcd"
    masked, meta = load_checkpoint(path)
    pruned = strip_and_rewire(masked)
    tol = args.tol if args.tol is not None else (1e-10 if meta.get("dtype") == "float64" else 1e-5)
    equivalence = equivalence_check(masked, pruned, trials=args.trials, tol=tol)
    report = prune_report(masked, pruned)

    save_checkpoint(out / "pruned.ppcd", pruned, {k: meta[k] for k in ("step", "epoch", "seed", "train")
                                                 if k in meta})
    report.to_csv(out / "prune_report.csv")
    print(report.to_table())
    for m in masked.masks():
        print(f"{m.path:<24} zero fraction {m.zero_fraction():.3f}  kept {int(m.m_star.data.sum())}/{m.n}")
    print(f"equivalence: max deviation {equivalence.max_deviation:.3e} over {equivalence.trials} pairs "
          f"(tol {tol:.1e}) {'passed' if equivalence.passed else 'FAILED'}")
    return 0 if equivalence.passed else 1


def cmd_generate(args: argparse.Namespace) -> int:
    gen, _ = load_checkpoint(args.checkpoint)
    rng = np.random.default_rng(settings.PPCD_SEED if args.seed is None else args.seed)
    dtype = gen.stem.weight.dtype
    out = Path(args.out)
    if args.interpolate == "z":
        z0, z1 = sample_noise(rng, 2, gen.cfg.z_dim, dtype)
        images = interpolate_z(gen, z0, z1, args.label, args.steps)
        path = save_grid(images, out / "interpolate_z.png", nrow=args.steps)
    elif args.interpolate == "class":
        z = sample_noise(rng, 1, gen.cfg.z_dim, dtype)[0]
        images = interpolate_class(gen, z, args.classes[0], args.classes[1], args.steps)
        path = save_grid(images, out / "interpolate_class.png", nrow=args.steps)
    else:
        k = gen.cfg.num_classes
        labels = np.tile(np.arange(k, dtype=np.int64), args.count)
        images = generate(gen, sample_noise(rng, len(labels), gen.cfg.z_dim, dtype), labels)
        path = save_grid(images, out / "samples.png", nrow=k)
    print(f"wrote {len(images)} images to {path}")
    return 0


def cmd_count(args: argparse.Namespace) -> int:
    run = _run_config(args)
    dtype = np.dtype(run.train.dtype)
    if args.checkpoint:
        gen, _ = load_checkpoint(args.checkpoint)
        models = [("generator", gen)]
    else:
        gen = build_generator(run.generator, seed=run.train.seed, dtype=dtype)
        models = [
            ("generator", gen),
            ("teacher", build_generator(run.teacher_generator(), seed=run.train.seed, dtype=dtype)),
            ("discriminator", build_discriminator(run.discriminator, seed=run.train.seed + 1, dtype=dtype)),
        ]
    for name, model in models:
        params, macs = summarize(model)
        print(f"{name}: params={params} macs={macs}")
    if args.time:
        print(f"generator: seconds_per_batch_64={time_generation(gen, batch=64):.4f}")
    return 0


def cmd_gradcheck(args: argparse.Namespace) -> int:
    results = run_gradcheck(seed=settings.PPCD_SEED if args.seed is None else args.seed, tol=args.tol)
    failed = [name for name, report in results if not report.passed]
    for name, report in results:
        print(f"== {name}")
        print(report.summary())
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def cmd_sweep_alpha(args: argparse.Namespace) -> int:
    base = _run_config(args)
    dataset = _dataset(base, args)
    out = Path(args.out)
    rows = []
    for alpha in args.alphas:
        run = base.with_overrides(alpha=alpha)
        run_dir = out / f"alpha_{alpha:.2f}"
        run.save(run_dir / "config.json")
        result = train_loop(run, dataset, run_dir, teacher=_load_teacher(run, args))
        masks = result.generator.masks()
        frozen = sum(m.frozen for m in masks)
        mean_zero = float(np.mean([m.zero_fraction() for m in masks]))
        if frozen == len(masks):
            pruned = strip_and_rewire(result.generator)
            save_checkpoint(run_dir / "pruned.ppcd", pruned, {"seed": run.train.seed, "alpha": alpha})
            params, macs = summarize(pruned)
        else:
            logger.warning(f"alpha {alpha}: only {frozen}/{len(masks)} masks froze; export skipped")
            params, macs = "", ""
        rows.append([alpha, frozen, len(masks), repr(mean_zero), params, macs])

    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["alpha", "frozen_masks", "masks", "mean_zero_fraction", "params", "macs"])
        writer.writerows(rows)
    for row in rows:
        print(f"alpha={row[0]} frozen={row[1]}/{row[2]} params={row[4]} macs={row[5]}")
    return 0


def cmd_synth_data(args: argparse.Namespace) -> int:
    run = _run_config(args)
    ds = run.dataset
    dataset = synth_dataset(ds.seed if args.seed is None else args.seed, ds.num_classes, ds.image_size,
                            ds.n_per_class)
    out = Path(args.out)
    path = save_dataset(dataset, out / "dataset.npz")
    save_grid(dataset.class_means(), out / "class_means.png", nrow=ds.num_classes)
    print(f"wrote {len(dataset)} images to {path}")
    return 0


COMMANDS = {
    "teacher-train": cmd_teacher_train,
    "train": cmd_train,
    "compress": cmd_compress,
    "generate": cmd_generate,
    "count": cmd_count,
    "gradcheck": cmd_gradcheck,
    "sweep-alpha": cmd_sweep_alpha,
    "synth-data": cmd_synth_data,
}


def cli_dispatch(argv: Optional[List[str]] = None) -> int:
    """
    Parse ``argv`` and run one command.

    Returns:
        int: 0 on success, 1 on a runtime failure, 2 on a usage error
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (ValidationError, CheckpointError, BinarizationIncompleteError, ValueError, OSError) as e:
        logger.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        logger.exception(f"{args.command} failed")
        print(f"error: {e}", file=sys.stderr)
        return 1


def main(argv: Optional[List[str]] = None) -> int:
    """Console entry point: configure logging, then run one command."""
    setup_logging()
    return cli_dispatch(argv)
