"""
Differentiable operations over Tensor.

Every function computes its forward value with numpy and, when a tape is
recording and an input requires a gradient, registers a backward rule that
maps the output gradient to one gradient per input.
"""
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from engine.tensor import NonFiniteError, ShapeError, Tensor, current_tape
from utils.config import settings

Axis = Optional[Union[int, Tuple[int, ...]]]


def _result(op, data, inputs, backward):
    out = Tensor(data)
    tape = current_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.record(op, out, inputs, backward)
    if settings.PPCD_DEBUG_CHECKS and not np.all(np.isfinite(out.data)):
        raise NonFiniteError(f"{op} produced non-finite values (output shape {out.shape})")
    return out


def as_tensor(value, like: Optional[Tensor] = None) -> Tensor:
    """Wrap a scalar or array as a constant tensor matching ``like``'s dtype."""
    if isinstance(value, Tensor):
        return value
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(value, dtype=dtype))


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def _operands(a, b, op: str) -> Tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b if isinstance(b, Tensor) else None
    a, b = as_tensor(a, like), as_tensor(b, like)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None
    return a, b


# Elementwise binary

def add(a, b) -> Tensor:
    a, b = _operands(a, b, "add")
    return _result("add", a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _operands(a, b, "sub")
    return _result("sub", a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _operands(a, b, "mul")
    return _result("mul", a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = _operands(a, b, "div")
    out = a.data / b.data
    return _result("div", out, (a, b),
                   lambda g: (_unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)))


def neg(x: Tensor) -> Tensor:
    return _result("neg", -x.data, (x,), lambda g: (-g,))


# Elementwise unary

def relu(x: Tensor) -> Tensor:
    # subgradient 0 at the kink
    return _result("relu", np.maximum(x.data, 0), (x,), lambda g: (g * (x.data > 0),))


def sigmoid(x: Tensor) -> Tensor:
    out = np.empty_like(x.data)
    pos = x.data >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x.data[pos]))
    exp_x = np.exp(x.data[~pos])
    out[~pos] = exp_x / (1.0 + exp_x)
    return _result("sigmoid", out, (x,), lambda g: (g * out * (1 - out),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return _result("tanh", out, (x,), lambda g: (g * (1 - out * out),))


def abs(x: Tensor) -> Tensor:  # noqa: A001
    return _result("abs", np.abs(x.data), (x,), lambda g: (g * np.sign(x.data),))


def square(x: Tensor) -> Tensor:
    return _result("square", x.data * x.data, (x,), lambda g: (2 * g * x.data,))


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return _result("sqrt", out, (x,), lambda g: (g / (2 * out),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return _result("exp", out, (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    return _result("log", np.log(x.data), (x,), lambda g: (g / x.data,))


def clamp_min(x: Tensor, floor: float) -> Tensor:
    keep = x.data > floor
    return _result("clamp_min", np.maximum(x.data, floor).astype(x.dtype), (x,), lambda g: (g * keep,))


# Reductions

def _expand(g: np.ndarray, shape: Tuple[int, ...], axis: Axis, keepdims: bool) -> np.ndarray:
    if axis is not None and not keepdims:
        g = np.expand_dims(g, axis)
    return np.broadcast_to(g, shape)


def _count(shape: Tuple[int, ...], axis: Axis) -> int:
    if axis is None:
        return int(np.prod(shape))
    axes = (axis,) if isinstance(axis, int) else axis
    return int(np.prod([shape[a] for a in axes]))


def sum(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    return _result("sum", x.data.sum(axis=axis, keepdims=keepdims), (x,),
                   lambda g: (_expand(g, x.shape, axis, keepdims),))


def mean(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    count = _count(x.shape, axis)
    if count == 0:
        raise ShapeError(f"mean over an empty extent of shape {x.shape}")
    return _result("mean", x.data.mean(axis=axis, keepdims=keepdims), (x,),
                   lambda g: (_expand(g, x.shape, axis, keepdims) / count,))


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)
    return _result("softmax", out, (x,),
                   lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def l2_norm(x: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    """Square root of the sum of squares; the subgradient at the origin is 0."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    out = norm if keepdims else norm.reshape(x.data.sum(axis=axis).shape)
    safe = np.where(norm > 0, norm, 1)

    def _backward(g):
        g = np.reshape(g, norm.shape)
        return (np.where(norm > 0, g * x.data / safe, 0).astype(x.dtype),)

    return _result("l2_norm", out, (x,), _backward)


def l2_normalize(x: Tensor, axis: int = -1, eps: float = 1e-12) -> Tensor:
    """Divide by the l2 norm along ``axis``; slices with norm below eps map to zero."""
    norm = np.sqrt((x.data * x.data).sum(axis=axis, keepdims=True))
    valid = norm >= eps
    safe = np.where(valid, norm, 1)
    out = np.where(valid, x.data / safe, 0).astype(x.dtype)

    def _backward(g):
        proj = (g * out).sum(axis=axis, keepdims=True)
        return (np.where(valid, (g - out * proj) / safe, 0).astype(x.dtype),)

    return _result("l2_normalize", out, (x,), _backward)


# Linear algebra and layout

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs operands of rank >= 2, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: inner dimensions differ ({a.shape[-1]} vs {b.shape[-2]})")

    def _backward(g):
        ga = np.matmul(g, np.swapaxes(b.data, -1, -2))
        gb = np.matmul(np.swapaxes(a.data, -1, -2), g)
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _result("matmul", np.matmul(a.data, b.data), (a, b), _backward)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"cannot reshape {x.shape} into {tuple(shape)}") from None
    return _result("reshape", out, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    inverse = np.argsort(axes)
    return _result("transpose", np.transpose(x.data, axes), (x,), lambda g: (np.transpose(g, inverse),))


def upsample2x(x: Tensor) -> Tensor:
    """Nearest-neighbour upsampling by 2 over the two trailing axes."""
    if x.ndim != 4:
        raise ShapeError(f"upsample2x expects (B, C, H, W), got {x.shape}")
    out = x.data.repeat(2, axis=2).repeat(2, axis=3)
    b, c, h, w = x.shape
    return _result("upsample2x", out, (x,), lambda g: (g.reshape(b, c, h, 2, w, 2).sum(axis=(3, 5)),))


def avg_pool2x(x: Tensor) -> Tensor:
    """2x2 average pooling with stride 2."""
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"avg_pool2x needs even spatial dims, got {h}x{w}")
    out = x.data.reshape(b, c, h // 2, 2, w // 2, 2).mean(axis=(3, 5))
    return _result("avg_pool2x", out, (x,),
                   lambda g: (g.repeat(2, axis=2).repeat(2, axis=3) / 4,))


def take_rows(table: Tensor, index: np.ndarray) -> Tensor:
    """Gather rows of a 2-D table by integer index."""
    index = np.asarray(index)
    rows = table.shape[0]
    if index.size and (index.min() < 0 or index.max() >= rows):
        raise IndexError(f"row index out of range for table with {rows} rows: {index.tolist()}")

    def _backward(g):
        grad = np.zeros_like(table.data)
        np.add.at(grad, index, g)
        return (grad,)

    return _result("take_rows", table.data[index], (table,), _backward)


def batch_stats(x: Tensor) -> Tuple[Tensor, Tensor]:
    """Per-channel mean and biased variance over batch and spatial axes."""
    if x.ndim != 4:
        raise ShapeError(f"batch_stats expects (B, C, H, W), got {x.shape}")
    if x.shape[0] == 0:
        raise ShapeError("batch_stats on an empty batch")
    mu = mean(x, axis=(0, 2, 3))
    centered = sub(x, reshape(mu, (1, x.shape[1], 1, 1)))
    var = mean(square(centered), axis=(0, 2, 3))
    return mu, var


# Convolution

def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor] = None, stride: int = 1, padding: int = 0) -> Tensor:
    """
    2-D cross-correlation.

    Args:
        x: Input of shape (B, Cin, H, W)
        weight: Kernel of shape (Cout, Cin, k, k)
        bias: Optional bias of shape (Cout,)
        stride: Step between output positions
        padding: Zero padding on every spatial side

    Returns:
        Tensor: Output of shape (B, Cout, H', W')
    """
    if x.ndim != 4:
        raise ShapeError(f"conv2d input must be (B, Cin, H, W), got {x.shape}")
    if weight.ndim != 4 or weight.shape[2] != weight.shape[3]:
        raise ShapeError(f"conv2d weight must be (Cout, Cin, k, k), got {weight.shape}")
    cout, cin, k, _ = weight.shape
    if x.shape[1] != cin:
        raise ShapeError(f"conv2d input channels {x.shape[1]} do not match weight in-channels {cin}")
    if bias is not None and bias.shape != (cout,):
        raise ShapeError(f"conv2d bias must have shape ({cout},), got {bias.shape}")

    batch, _, h, w = x.shape
    h_out = (h + 2 * padding - k) // stride + 1
    w_out = (w + 2 * padding - k) // stride + 1
    if h_out <= 0 or w_out <= 0:
        raise ShapeError(f"conv2d output would be empty for input {h}x{w}, kernel {k}, padding {padding}")

    padded = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    windows = np.lib.stride_tricks.sliding_window_view(padded, (k, k), axis=(2, 3))
    windows = windows[:, :, ::stride, ::stride][:, :, :h_out, :w_out]
    # (B, Cin, Ho, Wo, k, k) x (Cout, Cin, k, k) -> (B, Ho, Wo, Cout)
    out = np.tensordot(windows, weight.data, axes=([1, 4, 5], [1, 2, 3])).transpose(0, 3, 1, 2)
    if bias is not None:
        out = out + bias.data.reshape(1, cout, 1, 1)
    out = np.ascontiguousarray(out, dtype=x.dtype)

    def _backward(g):
        grad_w = np.tensordot(g, windows, axes=([0, 2, 3], [0, 2, 3]))
        grad_b = g.sum(axis=(0, 2, 3)) if bias is not None else None
        # (B, Cout, Ho, Wo) x (Cout, Cin, k, k) -> (B, Ho, Wo, Cin, k, k)
        grad_win = np.tensordot(g, weight.data, axes=([1], [0]))
        grad_pad = np.zeros(padded.shape, dtype=g.dtype)
        for i in range(k):
            for j in range(k):
                grad_pad[:, :, i:i + stride * h_out:stride, j:j + stride * w_out:stride] += \
                    grad_win[:, :, :, :, i, j].transpose(0, 3, 1, 2)
        grad_x = grad_pad[:, :, padding:padding + h, padding:padding + w] if padding else grad_pad
        return grad_x, grad_w, grad_b

    inputs = (x, weight) if bias is None else (x, weight, bias)
    if bias is None:
        return _result("conv2d", out, inputs, lambda g: _backward(g)[:2])
    return _result("conv2d", out, inputs, _backward)


# Operator sugar on Tensor

Tensor.__add__ = add
Tensor.__radd__ = lambda self, other: add(other, self)
Tensor.__sub__ = sub
Tensor.__rsub__ = lambda self, other: sub(other, self)
Tensor.__mul__ = mul
Tensor.__rmul__ = lambda self, other: mul(other, self)
Tensor.__truediv__ = div
Tensor.__rtruediv__ = lambda self, other: div(other, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = matmul
