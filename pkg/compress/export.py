"""
Export of a trained student: removes dead channels and mask layers.

Spectral normalization is folded into the exported weights, so the pruned
generator carries plain convolutions whose eval-mode outputs match the
masked model.
"""
from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List

import numpy as np

from engine import ShapeError, no_record
from harness.sampling import generate
from layers import Conv2d, Linear
from layers.spectral import spectral_normalize
from models.blocks import PPResBlock
from models.config import BlockSpec
from models.factory import build_generator
from models.generator import Generator
from pruning import BinarizationIncompleteError, active_channels
from utils.logging import logger


def _folded_weight(layer) -> np.ndarray:
    if layer.sn is None:
        return layer.weight.data
    with no_record():
        return spectral_normalize(layer.weight, layer.sn, update=False).data


def _plain_state(gen: Generator) -> "OrderedDict[str, np.ndarray]":
    """State dict with spectral norm folded in and its power-iteration buffers dropped."""
    state = gen.state_dict()
    for path, module in gen.named_modules():
        if isinstance(module, (Conv2d, Linear)) and module.sn is not None:
            state[f"{path}.weight"] = _folded_weight(module)
            state.pop(f"{path}.sn.u")
            state.pop(f"{path}.sn.v")
    return state


def _survivors(gen: Generator) -> List[Dict[str, List[int]]]:
    kept = []
    for k, block in enumerate(gen.blocks):
        if not isinstance(block, PPResBlock) or block.mask1 is None:
            raise BinarizationIncompleteError(f"block {k} has no masks to export")
        unfrozen = [m.path for m in block.masks() if not m.frozen]
        if unfrozen:
            raise BinarizationIncompleteError(f"binarization incomplete: unfrozen masks {unfrozen}")
        kept.append({"mask1": active_channels(block.mask1), "mask2": active_channels(block.mask2)})
    return kept


def strip_and_rewire(gen: Generator) -> Generator:
    """
    Build the pruned generator from a student whose masks are all frozen.

    For block k with surviving conv1 channels K1 and conv2 channels K2:
    conv1 keeps output filters K1, cbn2 keeps K1, conv2 keeps input slices K1
    and output filters K2, and the transition keeps input slices K2. Skip,
    cbn1 and every layer outside the blocks are copied unchanged.
    """
    if gen.cfg.pruned:
        raise ValueError("generator is already pruned")
    if not gen.cfg.prunable:
        raise ValueError("generator has no masks to export")
    kept = _survivors(gen)
    old = _plain_state(gen)

    blocks = [BlockSpec(in_ch=spec.in_ch, out_ch=spec.out_ch, upsample=spec.upsample,
                        conv1_out=len(keep["mask1"]), conv2_out=len(keep["mask2"]))
              for spec, keep in zip(gen.cfg.blocks, kept)]
    cfg = gen.cfg.model_copy(update={"blocks": blocks, "pruned": True, "spectral_norm": False})
    pruned = build_generator(cfg, seed=0, dtype=gen.stem.weight.dtype)

    new: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name in pruned.state_dict():
        new[name] = old[name]
    for k, keep in enumerate(kept):
        k1 = np.asarray(keep["mask1"], dtype=np.int64)
        k2 = np.asarray(keep["mask2"], dtype=np.int64)
        p = f"blocks.{k}"
        new[f"{p}.conv1.weight"] = old[f"{p}.conv1.weight"][k1]
        new[f"{p}.conv1.bias"] = old[f"{p}.conv1.bias"][k1]
        for table in ("gain", "bias"):
            new[f"{p}.cbn2.{table}.table"] = old[f"{p}.cbn2.{table}.table"][:, k1]
        for stat in ("running_mean", "running_var"):
            new[f"{p}.cbn2.{stat}"] = old[f"{p}.cbn2.{stat}"][k1]
        new[f"{p}.conv2.weight"] = old[f"{p}.conv2.weight"][k2][:, k1]
        new[f"{p}.conv2.bias"] = old[f"{p}.conv2.bias"][k2]
        new[f"{p}.transition.weight"] = old[f"{p}.transition.weight"][:, k2]
    pruned.load_state_dict(new, strict=True)
    pruned.train(gen.training)

    widths = ", ".join(f"{len(keep['mask1'])}/{len(keep['mask2'])}" for keep in kept)
    logger.info(f"exported pruned generator; surviving conv1/conv2 widths per block: {widths}")
    return pruned


@dataclass
class EquivalenceReport:
    max_deviation: float
    tol: float
    trials: int

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tol


def equivalence_check(masked: Generator, pruned: Generator, trials: int = 100, tol: float = 1e-5,
                      seed: int = 0, chunk: int = 10) -> EquivalenceReport:
    """
    Max |masked(z, c) - pruned(z, c)| over ``trials`` seeded pairs in eval mode.

    Args:
        masked: Student with frozen masks
        pruned: Output of strip_and_rewire
        trials: Number of (z, cls) pairs
        tol: Pass threshold
        seed: Seed of the pair stream
        chunk: Pairs per forward pass
    """
    if masked.cfg.z_dim != pruned.cfg.z_dim or masked.cfg.num_classes != pruned.cfg.num_classes:
        raise ShapeError("masked and pruned generators disagree on z_dim or class count")
    rng = np.random.default_rng(seed)
    deviation = 0.0
    done = 0
    while done < trials:
        count = min(chunk, trials - done)
        z = rng.standard_normal((count, masked.cfg.z_dim))
        cls = rng.integers(0, masked.cfg.num_classes, size=count)
        a = generate(masked, z, cls)
        b = generate(pruned, z, cls)
        if a.shape != b.shape:
            raise ShapeError(f"output shapes differ: {a.shape} vs {b.shape}")
        deviation = max(deviation, float(np.max(np.abs(a.astype(np.float64) - b.astype(np.float64)))))
        done += count
    report = EquivalenceReport(deviation, tol, trials)
    log = logger.info if report.passed else logger.warning
    log(f"equivalence over {trials} pairs: max deviation {deviation:.3e} (tol {tol:.1e})")
    return report
