"""
Finite-difference checks for every differentiable operation and a full
progressive-pruning block, run by the ``gradcheck`` command.
"""
from typing import Callable, Dict, List, Tuple

import numpy as np

from engine import GradCheckReport, Parameter, Tensor, grad_check, ops
from layers import CondBatchNorm2d, SelfAttention
from models.blocks import PPResBlock
from models.config import BlockSpec
from objectives.distill import ClassCondNorm, attention_map, class_norm_teacher, distill_loss
from utils.logging import logger

Case = Callable[[np.random.Generator], Tuple[Callable[[], Tensor], Dict[str, Tensor]]]


def _p(rng: np.random.Generator, *shape, low: float = -1.0, high: float = 1.0) -> Parameter:
    return Parameter(rng.uniform(low, high, size=shape))


def _away_from_zero(rng: np.random.Generator, *shape) -> Parameter:
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    return Parameter(sign * rng.uniform(0.2, 1.0, size=shape))


def _weighted(x: Tensor, w: np.ndarray) -> Tensor:
    """Scalar sum(x * w) with fixed random weights, so every output element matters."""
    return ops.sum(ops.mul(x, Tensor(w)))


def _unary(op) -> Case:
    def build(rng):
        x = _away_from_zero(rng, 3, 4)
        w = rng.standard_normal((3, 4))
        return (lambda: _weighted(op(x), w)), {"x": x}
    return build


def _positive_unary(op) -> Case:
    def build(rng):
        x = _p(rng, 3, 4, low=0.5, high=2.0)
        w = rng.standard_normal((3, 4))
        return (lambda: _weighted(op(x), w)), {"x": x}
    return build


def _binary(op, positive_b: bool = False) -> Case:
    def build(rng):
        a = _p(rng, 3, 4)
        b = _p(rng, 1, 4, low=0.5, high=2.0) if positive_b else _p(rng, 1, 4)
        w = rng.standard_normal((3, 4))
        return (lambda: _weighted(op(a, b), w)), {"a": a, "b": b}
    return build


def _matmul(rng):
    a, b = _p(rng, 2, 3, 4), _p(rng, 4, 5)
    w = rng.standard_normal((2, 3, 5))
    return (lambda: _weighted(ops.matmul(a, b), w)), {"a": a, "b": b}


def _reductions(rng):
    x = _p(rng, 2, 3, 4)
    w = rng.standard_normal((2, 4))
    return (lambda: ops.add(_weighted(ops.sum(x, axis=1), w), ops.mean(ops.square(x)))), {"x": x}


def _softmax(rng):
    x = _p(rng, 2, 5)
    w = rng.standard_normal((2, 5))
    return (lambda: _weighted(ops.softmax(x, axis=-1), w)), {"x": x}


def _norms(rng):
    x = _p(rng, 3, 6)
    w = rng.standard_normal((3, 6))
    return (lambda: ops.add(ops.sum(ops.l2_norm(x, axis=1)), _weighted(ops.l2_normalize(x, axis=1), w))), {"x": x}


def _layout(rng):
    x = _p(rng, 2, 2, 2, 4)
    w = rng.standard_normal((2, 2, 4, 8))
    w2 = rng.standard_normal((2, 2, 1, 2))

    def f():
        up = ops.upsample2x(ops.transpose(ops.reshape(x, (2, 2, 4, 2)), (0, 1, 3, 2)))
        return ops.add(_weighted(up, w), _weighted(ops.avg_pool2x(x), w2))
    return f, {"x": x}


def _take_rows(rng):
    table = _p(rng, 5, 3)
    index = np.array([0, 3, 3, 1])
    w = rng.standard_normal((4, 3))
    return (lambda: _weighted(ops.take_rows(table, index), w)), {"table": table}


def _batch_stats(rng):
    x = _p(rng, 3, 2, 2, 2)
    wm, wv = rng.standard_normal(2), rng.standard_normal(2)

    def f():
        mu, var = ops.batch_stats(x)
        return ops.add(_weighted(mu, wm), _weighted(var, wv))
    return f, {"x": x}


def _conv(stride: int, padding: int) -> Case:
    def build(rng):
        x, weight, bias = _p(rng, 2, 3, 6, 6), _p(rng, 4, 3, 3, 3), _p(rng, 4)
        h_out = (6 + 2 * padding - 3) // stride + 1
        w = rng.standard_normal((2, 4, h_out, h_out))
        return (lambda: _weighted(ops.conv2d(x, weight, bias, stride, padding), w)), \
            {"x": x, "weight": weight, "bias": bias}
    return build


def _cond_bn(rng):
    bn = CondBatchNorm2d(4, 3, dtype=np.float64)
    bn.gain.table.data = rng.uniform(0.5, 1.5, (3, 4))
    x = _p(rng, 3, 4, 2, 2)
    labels = np.array([0, 2, 1])
    w = rng.standard_normal((3, 4, 2, 2))
    params = {"x": x, "gain": bn.gain.table, "bias": bn.bias.table}
    return (lambda: _weighted(bn(x, labels), w)), params


def _attention(rng):
    attn = SelfAttention(8, rng, reduction=4, dtype=np.float64)
    attn.gamma.data = np.array([0.7])
    x = _p(rng, 2, 8, 2, 2)
    w = rng.standard_normal((2, 8, 2, 2))
    params = {"x": x, "gamma": attn.gamma, "f": attn.f.weight, "h": attn.h.weight}
    return (lambda: _weighted(attn(x), w)), params


def _distillation(rng):
    norm = ClassCondNorm(4, 3, dtype=np.float64)
    norm.gain.table.data = rng.uniform(0.5, 1.5, (3, 4))
    teacher = Tensor(rng.standard_normal((2, 4, 3, 3)))
    student = _p(rng, 2, 2, 3, 3)
    labels = np.array([1, 2])

    def f():
        return distill_loss(attention_map(class_norm_teacher(teacher, labels, norm)), attention_map(student))
    return f, {"student": student, "gain": norm.gain.table}


def _ppres_block(rng):
    spec = BlockSpec(in_ch=4, out_ch=4, upsample=True)
    block = PPResBlock(spec, 3, rng, alpha=0.7, delta=10.0, pivot=0.005, mask_init=0.05,
                       dtype=np.float64).assign_paths()
    block.mask1.weight.data = rng.uniform(-0.2, 0.2, 4)
    block.mask2.weight.data = rng.uniform(-0.2, 0.2, 4)
    x = _p(rng, 2, 4, 2, 2)
    labels = np.array([0, 1])
    w = rng.standard_normal((2, 4, 4, 4))
    params = {"x": x}
    params.update(block.parameters())
    return (lambda: _weighted(block(x, labels), w)), params


CASES: List[Tuple[str, Case]] = [
    ("add", _binary(ops.add)),
    ("sub", _binary(ops.sub)),
    ("mul", _binary(ops.mul)),
    ("div", _binary(ops.div, positive_b=True)),
    ("neg", _unary(ops.neg)),
    ("relu", _unary(ops.relu)),
    ("sigmoid", _unary(ops.sigmoid)),
    ("tanh", _unary(ops.tanh)),
    ("abs", _unary(ops.abs)),
    ("square", _unary(ops.square)),
    ("exp", _unary(ops.exp)),
    ("sqrt", _positive_unary(ops.sqrt)),
    ("log", _positive_unary(ops.log)),
    ("clamp_min", _unary(lambda x: ops.clamp_min(x, 0.0))),
    ("sum/mean", _reductions),
    ("softmax", _softmax),
    ("l2_norm/l2_normalize", _norms),
    ("matmul", _matmul),
    ("reshape/transpose/upsample/pool", _layout),
    ("take_rows", _take_rows),
    ("batch_stats", _batch_stats),
    ("conv2d", _conv(1, 1)),
    ("conv2d stride 2", _conv(2, 0)),
    ("cond_batchnorm", _cond_bn),
    ("self_attention", _attention),
    ("class-aware distillation", _distillation),
    ("pp-res block", _ppres_block),
]


def run_gradcheck(seed: int = 0, h: float = 1e-5, tol: float = 1e-4) -> List[Tuple[str, GradCheckReport]]:
    """Run every case in 64-bit with a fresh seeded stream per case."""
    results = []
    for i, (name, build) in enumerate(CASES):
        f, params = build(np.random.default_rng([seed, i]))
        report = grad_check(f, params, h=h, tol=tol)
        results.append((name, report))
        status = "ok" if report.passed else "FAIL"
        worst = max((r.max_rel_error for r in report.results), default=0.0)
        logger.info(f"gradcheck {name:<32} {status} (worst relative error {worst:.2e})")
    return results
