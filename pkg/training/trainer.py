"""
Joint adversarial training with progressive pruning and class-aware distillation.

Each step updates the discriminator on real and generated images, then the
generator (and the teacher-feature normalization tables) on
pp_weight * L_PP + L_CD + L_ADV, both over ``grad_accum_steps`` micro-batches,
and finally applies the binarization check to every unfrozen mask.
"""
from collections import OrderedDict
from dataclasses import dataclass
from pathlib import Path
from typing import TYPE_CHECKING, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from engine import Parameter, Tape, Tensor, backward, no_record
from harness.checkpoint import save_checkpoint
from harness.dataset import Batch, SyntheticDataset, iterate_batches
from harness.metrics import MetricsWriter, emit_metrics, write_mask_rows
from harness.sampling import generate, save_grid
from models.discriminator import Discriminator
from models.factory import build_discriminator, build_generator
from models.generator import Generator, generator_forward, teacher_forward
from objectives.distill import ClassCondNormParams, aggregate_cd, block_distill_losses
from objectives.losses import LossBundle, aggregate_pp, discriminator_loss, generator_loss, total_loss
from pruning.mask import binarize_check
from training.config import TrainConfig
from training.optim import NonFiniteGradientError, OptimState, adam_step, lr_at_epoch
from utils.logging import logger

if TYPE_CHECKING:
    from harness.config import RunConfig

class TrainingDivergedError(RuntimeError):
    """A loss or gradient became non-finite; carries the last good checkpoint, if any."""

    def __init__(self, message: str, checkpoint: Optional[Path] = None):
        hint = f"last good checkpoint: {checkpoint}" if checkpoint else "no checkpoint written yet"
        super().__init__(f"{message} ({hint})")
        self.checkpoint = checkpoint


@dataclass
class TrainState:
    rng: np.random.Generator
    g_opt: OptimState
    d_opt: OptimState
    norm_params: Optional[ClassCondNormParams] = None
    lr: float = 0.0
    phase: str = "joint"
    step: int = 0
    epoch: int = 0
    last_checkpoint: Optional[Path] = None


@dataclass
class TrainResult:
    generator: Generator
    discriminator: Discriminator
    checkpoint: Path
    metrics: Path
    state: TrainState


def step_flags(cfg: TrainConfig, phase: str) -> Tuple[bool, bool, bool]:
    """(use L_PP, use L_CD, run binarization checks) for an ablation and phase."""
    if phase == "adversarial":
        return False, False, False
    if phase == "prune":
        return True, False, True
    if phase == "distill":
        return False, True, True
    if phase != "joint":
        raise ValueError(f"unknown training phase: {phase}")
    return cfg.uses_pp, cfg.uses_cd, cfg.uses_pp


def split_batch(batch: Batch, parts: int) -> List[Batch]:
    size = batch.labels.shape[0]
    if size % parts:
        raise ValueError(f"batch of {size} cannot be split into {parts} equal micro-batches")
    step = size // parts
    return [Batch(batch.images[i * step:(i + 1) * step], batch.labels[i * step:(i + 1) * step])
            for i in range(parts)]


def accumulate_gradients(params: "OrderedDict[str, Parameter]", micro_batches: Sequence[Batch],
                         forward: Callable[[Batch], Tuple[Tensor, Dict[str, float]]]
                         ) -> Tuple[Dict[str, np.ndarray], Dict[str, float]]:
    """
    Mean gradient and mean loss components over micro-batches.

    Args:
        params: Parameters to differentiate
        micro_batches: Equal-size micro-batches
        forward: Builds the scalar loss for one micro-batch (called under a tape)
            and returns it with a dict of float components

    Returns:
        tuple: (gradients keyed like ``params``, averaged components)
    """
    grads = {name: np.zeros_like(p.data) for name, p in params.items()}
    totals: Dict[str, float] = {}
    for mb in micro_batches:
        with Tape() as tape:
            loss, parts = forward(mb)
        for name, g in backward(tape, loss, params).items():
            grads[name] += g
        for key, value in parts.items():
            totals[key] = totals.get(key, 0.0) + value
    count = len(micro_batches)
    for name in grads:
        grads[name] /= count
    return grads, {k: v / count for k, v in totals.items()}


def _noise(states: TrainState, count: int, z_dim: int, dtype) -> np.ndarray:
    return states.rng.standard_normal((count, z_dim)).astype(dtype)


def _zero(dtype) -> Tensor:
    return Tensor(np.zeros((), dtype=dtype))


def generator_parameters(student: Generator, norm_params: Optional[ClassCondNormParams],
                         train_masks: bool = True) -> "OrderedDict[str, Parameter]":
    """Trainable student parameters (frozen masks excluded) plus normalization tables."""
    params: "OrderedDict[str, Parameter]" = OrderedDict()
    for name, p in student.named_parameters(trainable_only=True):
        if not train_masks and ".mask" in name:
            continue
        params[f"student.{name}"] = p
    if norm_params is not None:
        for name, p in norm_params.named_parameters():
            params[f"cnorm.{name}"] = p
    return params


def _apply(params, grads, opt: OptimState, cfg: TrainConfig, lr: float, states: TrainState, who: str) -> None:
    try:
        adam_step(params, grads, opt, lr, cfg.beta1, cfg.beta2, cfg.eps)
    except NonFiniteGradientError as e:
        raise TrainingDivergedError(f"{who} update at step {states.step}: {e}", states.last_checkpoint) from e


def train_step(student: Generator, teacher: Optional[Generator], disc: Discriminator, batch: Batch,
               cfg: TrainConfig, states: TrainState) -> LossBundle:
    """
    One discriminator update, one generator update, then binarization checks.

    Args:
        student: Generator being trained
        teacher: Frozen wide generator; required when distillation is active
        disc: Discriminator
        batch: batch_size * grad_accum_steps real images and labels
        cfg: Training hyperparameters
        states: Optimizer moments, noise stream, learning rate and phase

    Returns:
        LossBundle: Micro-batch means of every loss term
    """
    use_pp, use_cd, binarize = step_flags(cfg, states.phase)
    if use_cd and (teacher is None or states.norm_params is None):
        raise ValueError("class-aware distillation needs a teacher and normalization tables")
    dtype = student.stem.weight.dtype
    z_dim = student.cfg.z_dim
    micro_batches = split_batch(batch, cfg.grad_accum_steps)
    if teacher is not None:
        teacher.eval()

    # discriminator
    d_params = disc.parameters(trainable_only=True)

    def d_forward(mb: Batch):
        z = _noise(states, len(mb.labels), z_dim, dtype)
        with no_record():
            fake, _ = generator_forward(student, z, mb.labels)
        loss = discriminator_loss(disc(Tensor(mb.images.astype(dtype)), mb.labels), disc(fake, mb.labels),
                                  cfg.adv_loss)
        return loss, {"l_adv_d": loss.item()}

    d_grads, d_parts = accumulate_gradients(d_params, micro_batches, d_forward)
    if not np.isfinite(d_parts["l_adv_d"]):
        raise TrainingDivergedError(f"non-finite discriminator loss at step {states.step}", states.last_checkpoint)
    _apply(d_params, d_grads, states.d_opt, cfg, states.lr, states, "discriminator")

    # generator
    g_params = generator_parameters(student, states.norm_params if use_cd else None,
                                    train_masks=cfg.ablation != "no_pp")
    num_blocks = student.cfg.num_blocks

    def g_forward(mb: Batch):
        z = _noise(states, len(mb.labels), z_dim, dtype)
        teacher_taps = teacher_forward(teacher, z, mb.labels)[1] if use_cd else None
        fake, taps = generator_forward(student, z, mb.labels)
        l_adv = generator_loss(disc(fake, mb.labels), cfg.adv_loss)
        l_pp = aggregate_pp(student.masks(), num_blocks) if use_pp else _zero(dtype)
        if use_cd:
            l_cd = aggregate_cd(block_distill_losses(teacher_taps, taps, mb.labels, states.norm_params,
                                                     cfg.distill_blocks))
        else:
            l_cd = _zero(dtype)
        total = total_loss(l_pp, l_cd, l_adv, cfg.pp_weight)
        return total, {"l_pp": l_pp.item(), "l_cd": l_cd.item(), "l_adv_g": l_adv.item(), "total_g": total.item()}

    g_grads, g_parts = accumulate_gradients(g_params, micro_batches, g_forward)
    bundle = LossBundle(l_adv_d=d_parts["l_adv_d"], **g_parts)
    if not bundle.is_finite():
        raise TrainingDivergedError(f"non-finite generator loss at step {states.step}: {bundle.as_dict()}",
                                    states.last_checkpoint)
    _apply(g_params, g_grads, states.g_opt, cfg, states.lr, states, "generator")

    if binarize:
        for state in student.masks():
            binarize_check(state)
    logger.debug(f"step {states.step}: {bundle.as_dict()}")
    return bundle


def _check_teacher(student: Generator, teacher: Generator, blocks: Sequence[int]) -> None:
    s, t = student.cfg, teacher.cfg
    if t.prunable:
        raise ValueError("teacher generator must not carry masks")
    if s.num_blocks != t.num_blocks or [b.upsample for b in s.blocks] != [b.upsample for b in t.blocks] \
            or s.bottom_width != t.bottom_width:
        raise ValueError("teacher and student block schedules differ")
    if s.num_classes != t.num_classes or s.z_dim != t.z_dim:
        raise ValueError("teacher and student disagree on z_dim or class count")
    for k in blocks:
        if not 0 <= k < s.num_blocks:
            raise ValueError(f"distilled block {k} outside 0..{s.num_blocks - 1}")


def _fit(gen: Generator, teacher: Optional[Generator], disc: Discriminator, dataset: SyntheticDataset,
         run: "RunConfig", out_dir: Path, states: TrainState, name: str,
         next_phase: Callable[[int], str]) -> TrainResult:
    cfg = run.train
    dtype = gen.stem.weight.dtype
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics_path = out_dir / "metrics.csv"
    (out_dir / "masks.csv").unlink(missing_ok=True)
    per_step = cfg.batch_size * cfg.grad_accum_steps
    steps = cfg.steps_per_epoch or max(1, len(dataset) // per_step)

    k = gen.cfg.num_classes
    grid_z = np.random.default_rng(cfg.seed + 3).standard_normal((2 * k, gen.cfg.z_dim)).astype(dtype)
    grid_labels = np.tile(np.arange(k, dtype=np.int64), 2)

    logger.info(f"training {name}: {cfg.epochs} epochs x {steps} steps, batch {cfg.batch_size} x "
                f"{cfg.grad_accum_steps} accumulations, ablation {cfg.ablation}")
    with MetricsWriter(metrics_path) as metrics:
        for epoch in range(cfg.epochs):
            phase = next_phase(epoch)
            if phase != states.phase:
                logger.info(f"epoch {epoch}: switching phase {states.phase} -> {phase}")
                states.phase = phase
            states.epoch = epoch
            states.lr = lr_at_epoch(cfg, epoch)
            batches = iterate_batches(dataset, per_step, steps, states.rng, dtype)
            for batch in tqdm(batches, total=steps, desc=f"{name} epoch {epoch}", leave=False, disable=None):
                bundle = train_step(gen, teacher, disc, batch, cfg, states)
                masks = gen.masks()
                emit_metrics(metrics, states.step, bundle, [m.zero_fraction() for m in masks], states.lr,
                             epoch=epoch, frozen_masks=sum(m.frozen for m in masks))
                states.step += 1

            meta = {"step": states.step, "epoch": epoch, "seed": cfg.seed, "phase": states.phase,
                    "train": cfg.model_dump()}
            states.last_checkpoint = save_checkpoint(out_dir / "checkpoints" / f"epoch_{epoch:03d}.ppcd", gen, meta)
            if gen.masks():
                write_mask_rows(out_dir / "masks.csv", epoch, gen.masks())
            save_grid(generate(gen, grid_z, grid_labels), out_dir / "samples" / f"epoch_{epoch:03d}.png", nrow=k)
            frozen = sum(m.frozen for m in gen.masks())
            logger.info(f"{name} epoch {epoch} done: lr {states.lr:.2e}, frozen masks {frozen}/{len(gen.masks())}")

    final = save_checkpoint(out_dir / f"{name}.ppcd", gen, {
        "step": states.step, "epoch": cfg.epochs - 1, "seed": cfg.seed, "phase": states.phase,
        "train": cfg.model_dump()})
    return TrainResult(gen, disc, final, metrics_path, states)


def train_loop(run: "RunConfig", dataset: SyntheticDataset, out_dir: Union[str, Path],
               teacher: Optional[Generator] = None) -> TrainResult:
    """
    Train the prunable student for ``run.train.epochs`` epochs.

    Writes ``metrics.csv``, ``masks.csv``, per-epoch checkpoints and sample
    grids under ``out_dir`` and the final model to ``student.ppcd``.
    """
    cfg = run.train
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    dtype = np.dtype(cfg.dtype)
    student = build_generator(run.generator, seed=cfg.seed, dtype=dtype)
    disc = build_discriminator(run.discriminator, seed=cfg.seed + 1, dtype=dtype)

    norm_params = None
    if cfg.uses_cd:
        if teacher is None:
            raise ValueError(f"ablation {cfg.ablation} distills from a teacher, but none was given")
        _check_teacher(student, teacher, cfg.distill_blocks)
        teacher.astype(dtype).eval()
        norm_params = ClassCondNormParams([teacher.cfg.blocks[k].out_ch for k in cfg.distill_blocks],
                                          run.generator.num_classes, dtype=dtype)
    states = TrainState(np.random.default_rng(cfg.seed + 2), OptimState(), OptimState(), norm_params,
                        phase="prune" if cfg.ablation == "two_step" else "joint")

    half = cfg.epochs / 2

    def next_phase(epoch: int) -> str:
        if cfg.ablation != "two_step":
            return "joint"
        if states.phase == "prune" and (all(m.frozen for m in student.masks()) or epoch >= half):
            return "distill"
        return states.phase

    return _fit(student, teacher if cfg.uses_cd else None, disc, dataset, run, Path(out_dir), states,
                "student", next_phase)


def teacher_train(run: "RunConfig", dataset: SyntheticDataset, out_dir: Union[str, Path]) -> TrainResult:
    """Adversarially train the wide unmasked generator; saved as ``teacher.ppcd``."""
    cfg = run.train
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    dtype = np.dtype(cfg.dtype)
    teacher = build_generator(run.teacher_generator(), seed=cfg.seed, dtype=dtype)
    disc = build_discriminator(run.discriminator, seed=cfg.seed + 1, dtype=dtype)
    states = TrainState(np.random.default_rng(cfg.seed + 2), OptimState(), OptimState(), phase="adversarial")
    return _fit(teacher, None, disc, dataset, run, Path(out_dir), states, "teacher", lambda epoch: "adversarial")
