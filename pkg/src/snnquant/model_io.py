"""Versioned binary model container.

Layout (all integers little-endian):

* magic ``QSPN``, u16 format version
* model kind (length-prefixed ASCII), u16 dim count + u32 dims
* group-format table: per quantizable group, name + tag ("FP32" or "Qi.f")
* named arrays: dtype code, shape, raw row-major payload

Full-precision parameter payloads are float32; quantized payloads are the
integer codes, so a container round-trips bit-exactly.  A JSON sidecar
(same path + ".json") carries hyperparameters, observed ranges, and
quantization metadata; it holds no timestamps, so identical training runs
serialize byte-identically.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = ["ModelContainer", "save_model", "load_model", "ContainerError"]

MAGIC = b"QSPN"
VERSION = 1

_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<i8"), 2: np.dtype("<f8")}
_DTYPE_CODES = {v: k for k, v in _DTYPES.items()}


class ContainerError(Exception):
    pass


@dataclass
class ModelContainer:
    kind: str
    dims: tuple[int, ...]
    group_tags: dict[str, str]
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)
    version: int = VERSION


def _pack_str(s: str) -> bytes:
    raw = s.encode("ascii")
    return struct.pack("<H", len(raw)) + raw


class _Reader:
    def __init__(self, raw: bytes):
        self.raw = raw
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.raw):
            raise ContainerError("container truncated")
        out = self.raw[self.pos : self.pos + n]
        self.pos += n
        return out

    def u8(self) -> int:
        return self.take(1)[0]

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        return self.take(self.u16()).decode("ascii")


def save_model(path: str | Path, container: ModelContainer) -> Path:
    path = Path(path)
    parts = [MAGIC, struct.pack("<H", container.version), _pack_str(container.kind)]
    parts.append(struct.pack("<H", len(container.dims)))
    parts += [struct.pack("<I", d) for d in container.dims]
    parts.append(struct.pack("<H", len(container.group_tags)))
    for name, tag in container.group_tags.items():
        parts += [_pack_str(name), _pack_str(tag)]
    parts.append(struct.pack("<H", len(container.arrays)))
    for name, arr in container.arrays.items():
        arr = np.ascontiguousarray(arr)
        if arr.dtype not in _DTYPE_CODES:
            raise ContainerError(f"array {name!r} has unsupported dtype {arr.dtype}")
        parts += [
            _pack_str(name),
            struct.pack("<B", _DTYPE_CODES[arr.dtype]),
            struct.pack("<B", arr.ndim),
        ]
        parts += [struct.pack("<I", d) for d in arr.shape]
        parts.append(arr.tobytes())
    path.write_bytes(b"".join(parts))
    sidecar = path.with_name(path.name + ".json")
    sidecar.write_text(
        json.dumps(container.meta, sort_keys=True, indent=1, default=_json_default)
        + "\n"
    )
    return path


def _json_default(obj):
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)}")


def load_model(path: str | Path) -> ModelContainer:
    path = Path(path)
    r = _Reader(path.read_bytes())
    if r.take(4) != MAGIC:
        raise ContainerError(f"{path} is not a model container (bad magic)")
    version = r.u16()
    if version != VERSION:
        raise ContainerError(f"unsupported container version {version}")
    kind = r.string()
    dims = tuple(r.u32() for _ in range(r.u16()))
    group_tags = {}
    for _ in range(r.u16()):
        name = r.string()
        group_tags[name] = r.string()
    arrays = {}
    for _ in range(r.u16()):
        name = r.string()
        dtype = _DTYPES.get(r.u8())
        if dtype is None:
            raise ContainerError(f"array {name!r}: unknown dtype code")
        ndim = r.u8()
        shape = tuple(r.u32() for _ in range(ndim))
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(
            r.take(count * dtype.itemsize), dtype=dtype
        ).reshape(shape)
    sidecar = path.with_name(path.name + ".json")
    meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
    return ModelContainer(
        kind=kind, dims=dims, group_tags=group_tags, arrays=arrays,
        meta=meta, version=version,
    )
