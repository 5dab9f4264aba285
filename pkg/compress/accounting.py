"""
Parameter and MAC accounting, and the before/after pruning report.
"""
import csv
import re
import time
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from engine import Parameter, Tensor, no_record
from harness.sampling import generate
from layers import CostRecorder, Module
from models.discriminator import Discriminator
from models.generator import Generator
from utils.logging import logger

_PRUNABLE = re.compile(r"^blocks\.\d+\.conv[12]$")
_TRANSITION = re.compile(r"^blocks\.\d+\.transition$")


def count_params(model: Module) -> "OrderedDict[str, int]":
    """
    Stored parameter values per module path (only modules that own parameters).

    Buffers such as running statistics, spectral-norm vectors and binarized
    mask values are not parameters and are not counted.
    """
    counts: "OrderedDict[str, int]" = OrderedDict()
    for path, module in model.named_modules():
        own = sum(value.size for value in vars(module).values() if isinstance(value, Parameter))
        if own:
            counts[path] = int(own)
    return counts


def total_params(model: Module) -> int:
    """Brute-force count over every stored parameter value."""
    return int(sum(p.size for _, p in model.named_parameters()))


def count_macs(model: Module, input_shape: Optional[Sequence[int]] = None) -> "OrderedDict[str, int]":
    """
    Per-sample multiply-accumulates per module path from one batch-1 forward pass.

    Args:
        model: Generator, Discriminator, or a single-input layer
        input_shape: Per-sample input shape; defaults to the model's own
            ((z_dim,) for generators, (3, S, S) for discriminators)

    Returns:
        OrderedDict: path -> MACs, in execution order
    """
    if isinstance(model, Generator):
        shape = tuple(input_shape or (model.cfg.z_dim,))
    elif isinstance(model, Discriminator):
        shape = tuple(input_shape or (3, model.cfg.image_size, model.cfg.image_size))
    elif input_shape is None:
        raise ValueError(f"input_shape is required for {type(model).__name__}")
    else:
        shape = tuple(input_shape)
    if any(d <= 0 for d in shape):
        raise ValueError(f"input shape must have positive extents, got {shape}")

    model.assign_paths()
    was_training = model.training
    model.eval()
    dtype = next(iter(model.parameters().values())).dtype
    try:
        with CostRecorder() as recorder, no_record():
            x = Tensor(np.zeros((1,) + shape, dtype=dtype))
            if isinstance(model, (Generator, Discriminator)):
                model(x, np.zeros(1, dtype=np.int64))
            else:
                model(x)
    finally:
        model.train(was_training)
    return recorder.by_path()


def _channels(model: Module) -> Dict[str, int]:
    out = {}
    for path, module in model.named_modules():
        for attr in ("out_channels", "out_features", "n", "channels"):
            if hasattr(module, attr):
                out[path] = int(getattr(module, attr))
                break
    return out


@dataclass
class LayerRow:
    name: str
    params_before: int
    params_after: int
    macs_before: int
    macs_after: int
    channels_before: int
    channels_after: int


@dataclass
class PruneReport:
    rows: List[LayerRow] = field(default_factory=list)

    @property
    def params_before(self) -> int:
        return sum(r.params_before for r in self.rows)

    @property
    def params_after(self) -> int:
        return sum(r.params_after for r in self.rows)

    @property
    def macs_before(self) -> int:
        return sum(r.macs_before for r in self.rows)

    @property
    def macs_after(self) -> int:
        return sum(r.macs_after for r in self.rows)

    @property
    def params_factor(self) -> float:
        return self.params_before / self.params_after if self.params_after else float("inf")

    @property
    def macs_factor(self) -> float:
        return self.macs_before / self.macs_after if self.macs_after else float("inf")

    def block_reduction(self) -> float:
        """
        1 - (pruned conv1 + conv2 + transition) / (unpruned conv1 + conv2).

        Transition layers exist only to restore block widths, so their whole
        size is charged against the pruned side.
        """
        before = sum(r.params_before for r in self.rows if _PRUNABLE.match(r.name))
        after = sum(r.params_after for r in self.rows if _PRUNABLE.match(r.name) or _TRANSITION.match(r.name))
        return 1.0 - after / before if before else 0.0

    def totals(self) -> Dict[str, float]:
        return {
            "params_before": self.params_before,
            "params_after": self.params_after,
            "macs_before": self.macs_before,
            "macs_after": self.macs_after,
            "params_factor": self.params_factor,
            "macs_factor": self.macs_factor,
            "block_reduction": self.block_reduction(),
        }

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(["name", "params_before", "params_after", "macs_before", "macs_after",
                             "channels_before", "channels_after"])
            for r in self.rows:
                writer.writerow([r.name, r.params_before, r.params_after, r.macs_before, r.macs_after,
                                 r.channels_before, r.channels_after])
            writer.writerow(["TOTAL", self.params_before, self.params_after, self.macs_before, self.macs_after,
                             "", ""])
        return path

    def to_table(self) -> str:
        header = ("layer", "params", "params'", "MACs", "MACs'", "ch", "ch'")
        body = [(r.name or "<root>", r.params_before, r.params_after, r.macs_before, r.macs_after,
                 r.channels_before, r.channels_after) for r in self.rows]
        body.append(("TOTAL", self.params_before, self.params_after, self.macs_before, self.macs_after, "", ""))
        cells = [header] + [tuple(f"{v:,}" if isinstance(v, int) else str(v) for v in row) for row in body]
        widths = [max(len(row[i]) for row in cells) for i in range(len(header))]
        lines = ["  ".join(c.ljust(w) if i == 0 else c.rjust(w) for i, (c, w) in enumerate(zip(row, widths)))
                 for row in cells]
        lines.insert(1, "-" * len(lines[0]))
        lines.append(f"params {self.params_factor:.2f}x smaller, MACs {self.macs_factor:.2f}x fewer, "
                     f"block convolutions {100 * self.block_reduction():.1f}% smaller")
        return "\n".join(lines)


def prune_report(before: Module, after: Module) -> PruneReport:
    """Rows joined by layer path; layers missing on one side count as zero there."""
    p0, p1 = count_params(before), count_params(after)
    m0, m1 = count_macs(before), count_macs(after)
    c0, c1 = _channels(before), _channels(after)
    names: List[str] = []
    for source in (p0, m0, p1, m1):
        for name in source:
            if name not in names:
                names.append(name)
    rows = [LayerRow(name, p0.get(name, 0), p1.get(name, 0), m0.get(name, 0), m1.get(name, 0),
                     c0.get(name, 0), c1.get(name, 0)) for name in names]
    report = PruneReport(rows)
    logger.info(f"prune report: params {report.params_before:,} -> {report.params_after:,}, "
                f"MACs {report.macs_before:,} -> {report.macs_after:,}")
    return report


def time_generation(gen: Generator, batch: int = 64, repeats: int = 3, seed: int = 0) -> float:
    """Median wall-clock seconds to generate one batch in eval mode."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((batch, gen.cfg.z_dim))
    cls = rng.integers(0, gen.cfg.num_classes, size=batch)
    samples: List[float] = []
    for _ in range(repeats):
        start = time.perf_counter()
        generate(gen, z, cls)
        samples.append(time.perf_counter() - start)
    return float(np.median(samples))


def summarize(model: Module) -> Tuple[int, int]:
    """(total parameters, total per-sample MACs)."""
    return total_params(model), int(sum(count_macs(model).values()))
