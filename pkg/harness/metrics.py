"""
Per-step metrics stream in CSV form.
"""
import csv
from pathlib import Path
from typing import IO, Optional, Sequence, Union

import numpy as np

from objectives.losses import LossBundle

METRIC_COLUMNS = ("step", "epoch", "lr", "l_pp", "l_cd", "l_adv_d", "l_adv_g", "total",
                  "frozen_masks", "mean_zero_fraction")


class MetricsWriter:
    """Sole owner of one CSV stream; writes the header before the first row."""

    def __init__(self, stream: Union[IO[str], str, Path]):
        self._owned = not hasattr(stream, "write")
        if self._owned:
            path = Path(stream)
            path.parent.mkdir(parents=True, exist_ok=True)
            stream = open(path, "w", newline="", encoding="utf-8")
        self.stream = stream
        self._writer = csv.writer(stream, lineterminator="\n")
        self._header_written = False
        self.rows = 0

    def write_row(self, row: Sequence) -> None:
        if not self._header_written:
            self._writer.writerow(METRIC_COLUMNS)
            self._header_written = True
        self._writer.writerow(row)
        self.stream.flush()
        self.rows += 1

    def close(self) -> None:
        if self._owned and not self.stream.closed:
            self.stream.close()

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        self.close()
        return False


def _fmt(value: float) -> str:
    return repr(float(value))


def emit_metrics(stream: MetricsWriter, step: int, bundle: LossBundle, zero_fractions: Sequence[float],
                 lr: float, epoch: int = 0, frozen_masks: Optional[int] = None) -> None:
    """
    Append one row for a training step.

    Args:
        stream: Metrics writer
        step: Global step index
        bundle: Loss values of the step
        zero_fractions: Fraction of mask values at or below the pivot, per mask
        lr: Learning rate used for the step
        epoch: Epoch index
        frozen_masks: Number of frozen masks
    """
    mean_zero = float(np.mean(zero_fractions)) if len(zero_fractions) else 0.0
    stream.write_row([
        step,
        epoch,
        _fmt(lr),
        _fmt(bundle.l_pp),
        _fmt(bundle.l_cd),
        _fmt(bundle.l_adv_d),
        _fmt(bundle.l_adv_g),
        _fmt(bundle.total_g),
        0 if frozen_masks is None else frozen_masks,
        _fmt(mean_zero),
    ])


def read_metrics(path: Union[str, Path]) -> list:
    """Rows of a metrics CSV as dicts of floats."""
    with open(path, newline="", encoding="utf-8") as f:
        return [{k: float(v) for k, v in row.items()} for row in csv.DictReader(f)]


MASK_COLUMNS = ("epoch", "mask", "n", "zero_fraction", "frozen", "kept")


def write_mask_rows(path: Union[str, Path], epoch: int, masks: Sequence) -> None:
    """Append one row per mask layer; the header is written when the file is new."""
    path = Path(path)
    new = not path.exists()
    with open(path, "a", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        if new:
            writer.writerow(MASK_COLUMNS)
        for m in masks:
            kept = int(m.m_star.data.sum()) if m.frozen else ""
            writer.writerow([epoch, m.path, m.n, _fmt(m.zero_fraction()), int(m.frozen), kept])
