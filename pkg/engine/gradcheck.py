"""
Finite-difference verification of tape gradients.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Mapping

import numpy as np

from engine.tensor import Tape, Tensor, backward, no_record
from utils.logging import logger


@dataclass
class GradCheckResult:
    name: str
    max_rel_error: float
    passed: bool


@dataclass
class GradCheckReport:
    tol: float
    results: List[GradCheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.results)

    def summary(self) -> str:
        lines = [f"{'parameter':<40} {'max rel err':>12}  status"]
        for r in self.results:
            lines.append(f"{r.name:<40} {r.max_rel_error:>12.3e}  {'ok' if r.passed else 'FAIL'}")
        return "\n".join(lines)


def grad_check(f: Callable[[], Tensor],
               params: Mapping[str, Tensor],
               h: float = 1e-5,
               tol: float = 1e-4,
               floor: float = 1e-3) -> GradCheckReport:
    """
    Compare backward gradients against central differences.

    The error of an element is |analytic - numeric| / max(|analytic|, |numeric|, floor);
    each parameter block reports its worst element.

    Args:
        f: Zero-argument function recomputing a scalar loss from ``params``
        params: Named 64-bit leaves to perturb
        h: Finite-difference step
        tol: Pass threshold on the relative error
        floor: Lower bound on the error denominator

    Returns:
        GradCheckReport: One result per parameter block
    """
    for name, p in params.items():
        if p.dtype != np.float64:
            raise ValueError(f"grad_check needs 64-bit parameters, {name} is {p.dtype}")

    with Tape() as tape:
        loss = f()
    analytic = backward(tape, loss, params)

    report = GradCheckReport(tol=tol)
    for name, p in params.items():
        original = p.data
        numeric = np.zeros_like(original)
        for idx in np.ndindex(original.shape):
            values = []
            for step in (h, -h):
                probe = original.copy()
                probe[idx] += step
                p.data = probe
                with no_record():
                    values.append(f().item())
            numeric[idx] = (values[0] - values[1]) / (2 * h)
        p.data = original

        grad = analytic[name]
        denom = np.maximum(np.maximum(np.abs(grad), np.abs(numeric)), floor)
        err = float((np.abs(grad - numeric) / denom).max()) if grad.size else 0.0
        report.results.append(GradCheckResult(name=name, max_rel_error=err, passed=err <= tol))
        logger.debug(f"grad_check {name}: max relative error {err:.3e}")

    return report
