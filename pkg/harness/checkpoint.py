"""
Binary checkpoint container.

Layout, all integers little-endian:

    b"PPCD"                       magic
    u32                           format version
    u64 + bytes                   UTF-8 JSON metadata and its byte length
    u32                           tensor count
    per tensor:
        u32 + bytes               UTF-8 name and its byte length
        u8                        dtype tag (0 float32, 1 float64, 2 int64)
        u8                        rank
        u64 * rank                extents
        bytes                     raw little-endian values, C order
"""
import json
import struct
from collections import OrderedDict
from pathlib import Path
from typing import Any, Dict, Mapping, Optional, Tuple, Union

import numpy as np

from models.config import GeneratorConfig
from models.factory import build_generator
from models.generator import Generator
from utils.logging import logger

MAGIC = b"PPCD"
FORMAT_VERSION = 1

_DTYPE_TAGS = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<i8")}
_TAG_FOR_KIND = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.int64): 2}

PathLike = Union[str, Path]


class CheckpointError(ValueError):
    """Base class for unreadable checkpoint files."""


class NotACheckpointError(CheckpointError):
    pass


class UnsupportedVersionError(CheckpointError):
    pass


class TruncatedCheckpointError(CheckpointError):
    pass


def _tag_for(name: str, array: np.ndarray) -> int:
    dtype = array.dtype
    if dtype.kind == "i":
        dtype = np.dtype(np.int64)
    tag = _TAG_FOR_KIND.get(dtype.newbyteorder("="))
    if tag is None:
        raise ValueError(f"tensor {name}: unsupported dtype {array.dtype}")
    return tag


def encode(metadata: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> bytes:
    """Serialize metadata and named tensors into the container format."""
    meta = json.dumps(metadata, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<Q", len(meta)), meta,
             struct.pack("<I", len(tensors))]
    for name, value in tensors.items():
        array = np.ascontiguousarray(value)
        tag = _tag_for(name, array)
        encoded = name.encode("utf-8")
        parts.append(struct.pack("<I", len(encoded)))
        parts.append(encoded)
        parts.append(struct.pack("<BB", tag, array.ndim))
        parts.append(struct.pack(f"<{array.ndim}Q", *array.shape))
        parts.append(array.astype(_DTYPE_TAGS[tag], copy=False).tobytes(order="C"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes, source: str):
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise TruncatedCheckpointError(
                f"{self.source}: truncated while reading {what} (need {count} bytes at offset {self.offset}, "
                f"file has {len(self.data)})")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode(data: bytes, source: str = "<bytes>") -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    """Parse a container; raises a CheckpointError subclass describing the defect."""
    if len(data) < len(MAGIC) or data[:len(MAGIC)] != MAGIC:
        raise NotACheckpointError(f"{source}: not a checkpoint (bad magic bytes)")
    reader = _Reader(data, source)
    reader.take(len(MAGIC), "magic")
    (version,) = reader.unpack("<I", "format version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"{source}: format version {version}, expected {FORMAT_VERSION}")
    (meta_len,) = reader.unpack("<Q", "metadata length")
    try:
        metadata = json.loads(reader.take(meta_len, "metadata").decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"{source}: unreadable metadata: {e}") from e
    (count,) = reader.unpack("<I", "tensor count")
    tensors: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for i in range(count):
        (name_len,) = reader.unpack("<I", f"name length of tensor {i}")
        name = reader.take(name_len, f"name of tensor {i}").decode("utf-8")
        tag, rank = reader.unpack("<BB", f"header of {name}")
        if tag not in _DTYPE_TAGS:
            raise CheckpointError(f"{source}: tensor {name} has unknown dtype tag {tag}")
        shape = reader.unpack(f"<{rank}Q", f"extents of {name}") if rank else ()
        dtype = _DTYPE_TAGS[tag]
        nbytes = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        raw = reader.take(nbytes, f"values of {name}")
        if name in tensors:
            raise CheckpointError(f"{source}: duplicate tensor name {name}")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
    return metadata, tensors


def write_container(path: PathLike, metadata: Mapping[str, Any], tensors: Mapping[str, np.ndarray]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(encode(metadata, tensors))
    return path


def read_container(path: PathLike) -> Tuple[Dict[str, Any], "OrderedDict[str, np.ndarray]"]:
    path = Path(path)
    return decode(path.read_bytes(), str(path))


def save_checkpoint(path: PathLike, model: Generator, states: Optional[Mapping[str, Any]] = None) -> Path:
    """
    Save a generator with its architecture, mask states and run metadata.

    Args:
        path: Output file
        model: Student, teacher or pruned generator
        states: Extra JSON-serializable metadata (step, epoch, seed, train config)

    Returns:
        Path: The written file
    """
    masks = {m.path: m.metadata() for m in model.masks()}
    metadata = {
        "generator": model.cfg.model_dump(),
        "masks": masks,
        "pruned": model.cfg.pruned,
        "dtype": str(model.stem.weight.dtype),
        "init": model.cfg.init,
    }
    metadata.update(states or {})
    written = write_container(path, metadata, model.state_dict())
    logger.info(f"checkpoint saved to {written}")
    return written


def load_checkpoint(path: PathLike) -> Tuple[Generator, Dict[str, Any]]:
    """Rebuild the generator stored at ``path``; returns (model, metadata)."""
    metadata, tensors = read_container(path)
    if "generator" not in metadata:
        raise CheckpointError(f"{path}: checkpoint holds no generator")
    cfg = GeneratorConfig.model_validate(metadata["generator"])
    model = build_generator(cfg, seed=0, dtype=np.dtype(metadata.get("dtype", "float32")))
    model.load_state_dict(tensors, strict=True)
    by_path = {m.path: m for m in model.masks()}
    for mask_path, meta in metadata.get("masks", {}).items():
        if mask_path not in by_path:
            raise CheckpointError(f"{path}: mask {mask_path} has no counterpart in the generator")
        by_path[mask_path].load_metadata(meta)
    logger.debug(f"loaded checkpoint {path}: {len(tensors)} tensors, pruned={cfg.pruned}")
    return model, metadata
