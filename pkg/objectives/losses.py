"""
Progressive-pruning aggregation, adversarial losses and the total objective.
"""
from dataclasses import asdict, dataclass
from typing import Dict, Optional, Sequence, Tuple

import numpy as np

from engine import Tensor, ops
from pruning import MaskState, mask_regularizer

LOG_FLOOR = 1e-12
PP_WEIGHT = 0.01
ADV_LOSSES = ("non_saturating", "saturating", "hinge")


@dataclass
class LossBundle:
    l_pp: float = 0.0
    l_cd: float = 0.0
    l_adv_d: float = 0.0
    l_adv_g: float = 0.0
    total_g: float = 0.0

    def is_finite(self) -> bool:
        return all(np.isfinite(v) for v in asdict(self).values())

    def as_dict(self) -> Dict[str, float]:
        return asdict(self)


def _scalar(value, like: Optional[Tensor] = None) -> Tensor:
    return ops.as_tensor(value, like)


def aggregate_pp(masks: Sequence[MaskState], num_blocks: Optional[int] = None) -> Tensor:
    """
    Mean mask regularizer over all mask layers.

    Args:
        masks: Every mask of the generator, two per block
        num_blocks: When given, the mask count must equal 2 * num_blocks

    Returns:
        Tensor: Scalar L_PP; frozen masks contribute constants
    """
    if num_blocks is not None and len(masks) != 2 * num_blocks:
        raise ValueError(f"expected {2 * num_blocks} mask layers for {num_blocks} blocks, got {len(masks)}")
    if not masks:
        return Tensor(np.zeros((), dtype=np.float32))
    total = mask_regularizer(masks[0])
    for state in masks[1:]:
        total = ops.add(total, mask_regularizer(state))
    return ops.mul(total, 1.0 / len(masks))


def _log_sigmoid(x: Tensor) -> Tensor:
    return ops.log(ops.clamp_min(ops.sigmoid(x), LOG_FLOOR))


def discriminator_loss(d_real: Tensor, d_fake: Tensor, kind: str = "non_saturating") -> Tensor:
    if kind == "hinge":
        return ops.add(ops.mean(ops.relu(ops.sub(1.0, d_real))), ops.mean(ops.relu(ops.add(d_fake, 1.0))))
    if kind not in ADV_LOSSES:
        raise ValueError(f"unknown adversarial loss: {kind}")
    # 1 - sigmoid(x) == sigmoid(-x)
    return ops.neg(ops.add(ops.mean(_log_sigmoid(d_real)), ops.mean(_log_sigmoid(ops.neg(d_fake)))))


def generator_loss(d_fake: Tensor, kind: str = "non_saturating") -> Tensor:
    if kind == "non_saturating":
        return ops.neg(ops.mean(_log_sigmoid(d_fake)))
    if kind == "saturating":
        return ops.mean(_log_sigmoid(ops.neg(d_fake)))
    if kind == "hinge":
        return ops.neg(ops.mean(d_fake))
    raise ValueError(f"unknown adversarial loss: {kind}")


def adversarial_losses(d_real: Tensor, d_fake: Tensor, kind: str = "non_saturating") -> Tuple[Tensor, Tensor]:
    """Return (discriminator loss, generator loss) for one pair of logit batches."""
    return discriminator_loss(d_real, d_fake, kind), generator_loss(d_fake, kind)


def total_loss(l_pp, l_cd, l_adv_g, pp_weight: float = PP_WEIGHT) -> Tensor:
    """pp_weight * L_PP + L_CD + L_ADV on the generator side."""
    like = next((t for t in (l_adv_g, l_cd, l_pp) if isinstance(t, Tensor)), None)
    weighted = ops.mul(_scalar(l_pp, like), pp_weight)
    return ops.add(ops.add(weighted, _scalar(l_cd, like)), _scalar(l_adv_g, like))
