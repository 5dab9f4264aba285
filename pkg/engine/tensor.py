"""
Dense tensors and the operation tape used for reverse-mode differentiation.

A Tensor is a value: operations never write into their inputs. Only the
leaves created as Parameter have their storage replaced, and only by the
optimizer between steps. Operations executed while a Tape is active (and with
at least one input requiring a gradient) are appended to that tape together
with their backward rule.
"""
from contextlib import contextmanager
from typing import Callable, Dict, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

DEFAULT_DTYPE = np.float32
FLOAT_DTYPES = (np.float32, np.float64)


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """Raised by the debug check when an operation produces NaN or Inf."""


class Tensor:
    """Dense n-dimensional float array with an optional gradient requirement.

    Storage is always C-contiguous: reductions over strided views can round
    differently, so two tensors with equal values must share a layout.
    """

    __slots__ = ("_data", "requires_grad", "name")

    def __init__(self, data, requires_grad=False, name=None, dtype=None):
        array = np.asarray(data, dtype=dtype)
        if array.dtype.type not in FLOAT_DTYPES:
            array = array.astype(DEFAULT_DTYPE)
        self.data = array
        self.requires_grad = requires_grad
        self.name = name

    @property
    def data(self) -> np.ndarray:
        return self._data

    @data.setter
    def data(self, value) -> None:
        self._data = np.asarray(value, order="C")

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(()))

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self):
        label = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{label})"


class Parameter(Tensor):
    """Trainable leaf. The optimizer swaps its storage after each step."""

    __slots__ = ()

    def __init__(self, data, name=None, dtype=None):
        super().__init__(data, requires_grad=True, name=name, dtype=dtype)


class TapeRecord(NamedTuple):
    op: str
    output: Tensor
    inputs: Tuple[Tensor, ...]
    backward: Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class Tape:
    """Ordered record of executed operations.

    Records are appended in execution order, so every record's inputs were
    produced by an earlier record or are leaves.
    """

    def __init__(self):
        self.records: List[TapeRecord] = []

    def __enter__(self):
        _ACTIVE.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _ACTIVE.pop()
        return False

    def __len__(self):
        return len(self.records)

    def record(self, op, output, inputs, backward):
        self.records.append(TapeRecord(op, output, tuple(inputs), backward))

    def backward(self, loss, params):
        return backward(self, loss, params)


_ACTIVE: List[Optional[Tape]] = []


def current_tape() -> Optional[Tape]:
    """Return the innermost active tape, or None when recording is off."""
    return _ACTIVE[-1] if _ACTIVE else None


@contextmanager
def no_record():
    """Suspend recording inside an active tape (used for frozen forwards)."""
    _ACTIVE.append(None)
    try:
        yield
    finally:
        _ACTIVE.pop()


def backward(tape: Tape, loss: Tensor, params: Mapping[str, Tensor]) -> Dict[str, np.ndarray]:
    """
    Run reverse-mode differentiation over a tape.

    Args:
        tape: Tape holding the operations that produced ``loss``
        loss: Scalar tensor
        params: Named leaves to return gradients for

    Returns:
        dict: Gradient per name; leaves the loss does not reach get zeros
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")

    grads: Dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    for record in reversed(tape.records):
        grad_out = grads.pop(id(record.output), None)
        if grad_out is None:
            continue
        for tensor, grad_in in zip(record.inputs, record.backward(grad_out)):
            if grad_in is None or not tensor.requires_grad:
                continue
            key = id(tensor)
            grads[key] = grads[key] + grad_in if key in grads else grad_in

    result = {}
    for name, param in params.items():
        grad = grads.get(id(param))
        if grad is None:
            grad = np.zeros_like(param.data)
        result[name] = np.asarray(grad, dtype=param.data.dtype).reshape(param.shape)
    return result
