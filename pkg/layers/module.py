"""
Minimal module tree: named parameters, buffers, train/eval mode and cost
recording for MAC accounting.
"""
from collections import OrderedDict
from typing import Dict, Iterator, List, Tuple

import numpy as np

from engine import Parameter, Tensor


class CostRecorder:
    """Collects (module path, kind, MACs, output channels) while active."""

    def __init__(self):
        self.entries: List[Tuple[str, str, int, int]] = []

    def __enter__(self):
        _RECORDERS.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _RECORDERS.pop()
        return False

    def add(self, path: str, kind: str, macs: int, channels: int = 0):
        self.entries.append((path, kind, int(macs), int(channels)))

    def by_path(self) -> "OrderedDict[str, int]":
        totals: "OrderedDict[str, int]" = OrderedDict()
        for path, _, macs, _ in self.entries:
            totals[path] = totals.get(path, 0) + macs
        return totals


_RECORDERS: List[CostRecorder] = []


class Module:
    """Base class for layers and models.

    Attributes holding a Parameter, a Module, or a list of Modules are
    discovered in assignment order. Buffers are tensors registered with
    ``register_buffer``; they are saved but never trained.
    """

    def __init__(self):
        object.__setattr__(self, "_buffer_names", [])
        self.training = True
        self.path = ""

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def register_buffer(self, name: str, value) -> None:
        setattr(self, name, value if isinstance(value, Tensor) else Tensor(value))
        if name not in self._buffer_names:
            self._buffer_names.append(name)

    def is_trainable(self) -> bool:
        return True

    # Tree traversal

    def _children(self) -> Iterator[Tuple[str, "Module"]]:
        for name, value in vars(self).items():
            if isinstance(value, Module):
                yield name, value
            elif isinstance(value, (list, tuple)) and value and all(isinstance(v, Module) for v in value):
                for i, child in enumerate(value):
                    yield f"{name}.{i}", child

    def named_modules(self, prefix: str = "") -> Iterator[Tuple[str, "Module"]]:
        yield prefix, self
        for name, child in self._children():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name)

    def named_parameters(self, prefix: str = "", trainable_only: bool = False) -> Iterator[Tuple[str, Parameter]]:
        if not trainable_only or self.is_trainable():
            for name, value in vars(self).items():
                if isinstance(value, Parameter):
                    yield (f"{prefix}.{name}" if prefix else name), value
        for name, child in self._children():
            yield from child.named_parameters(f"{prefix}.{name}" if prefix else name, trainable_only)

    def named_buffers(self, prefix: str = "") -> Iterator[Tuple[str, Tensor]]:
        for name in self._buffer_names:
            yield (f"{prefix}.{name}" if prefix else name), getattr(self, name)
        for name, child in self._children():
            yield from child.named_buffers(f"{prefix}.{name}" if prefix else name)

    def parameters(self, trainable_only: bool = False) -> "OrderedDict[str, Parameter]":
        return OrderedDict(self.named_parameters(trainable_only=trainable_only))

    def assign_paths(self) -> "Module":
        """Store each submodule's dotted path, used to label recorded costs."""
        for name, module in self.named_modules():
            module.path = name
        return self

    # State

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        state: "OrderedDict[str, np.ndarray]" = OrderedDict()
        for name, p in self.named_parameters():
            state[name] = p.data
        for name, b in self.named_buffers():
            state[name] = b.data
        return state

    def load_state_dict(self, state: Dict[str, np.ndarray], strict: bool = True) -> None:
        targets = OrderedDict(self.named_parameters())
        targets.update(self.named_buffers())
        missing = [k for k in targets if k not in state]
        unexpected = [k for k in state if k not in targets]
        if strict and (missing or unexpected):
            raise KeyError(f"state mismatch: missing={missing[:5]} unexpected={unexpected[:5]}")
        for name, tensor in targets.items():
            if name not in state:
                continue
            value = np.asarray(state[name])
            if value.shape != tensor.shape:
                raise ValueError(f"shape mismatch for {name}: expected {tensor.shape}, got {value.shape}")
            tensor.data = value.astype(tensor.dtype, order="C", copy=True)

    def train(self, mode: bool = True) -> "Module":
        for _, module in self.named_modules():
            module.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def astype(self, dtype) -> "Module":
        for _, p in self.named_parameters():
            p.data = p.data.astype(dtype, order="C")
        for _, b in self.named_buffers():
            b.data = b.data.astype(dtype, order="C")
        return self

    # Accounting

    def record_cost(self, kind: str, macs: int, channels: int = 0) -> None:
        for recorder in _RECORDERS:
            recorder.add(self.path, kind, macs, channels)


def init_weight(rng: np.random.Generator, shape, method: str = "orthogonal", dtype=np.float32) -> np.ndarray:
    """
    Initialize a weight array of ``shape`` with fan-in along all but the first axis.

    Args:
        rng: Seeded generator
        shape: (out, in, ...) for convolutions and linear layers
        method: "orthogonal" or "normal" (scaled by 1/sqrt(fan_in))
        dtype: Output dtype
    """
    out_dim = shape[0]
    fan_in = int(np.prod(shape[1:])) if len(shape) > 1 else 1
    if out_dim == 0 or fan_in == 0:
        return np.zeros(shape, dtype=dtype)
    if method == "normal":
        return (rng.standard_normal(shape) / np.sqrt(fan_in)).astype(dtype)
    if method != "orthogonal":
        raise ValueError(f"unknown init method: {method}")
    flat = rng.standard_normal((max(out_dim, fan_in), min(out_dim, fan_in)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if out_dim < fan_in:
        q = q.T
    return np.ascontiguousarray(q.reshape(shape), dtype=dtype)
