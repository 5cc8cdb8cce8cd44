"""Mask persistence.

Binary layout (all integers little-endian):

    magic   4 bytes  b"LTMK"
    version u16      currently 1
    count   u32      number of tensors
    then per tensor:
      name_len u16, name UTF-8 bytes
      flat_len u64
      bitset   ceil(flat_len / 8) bytes, LSB-first within each byte

The format stores flat lengths only; reshaping needs the ModelConfig.
Provenance metadata travels in a JSON sidecar at ``<path>.json`` since
the binary layout has no metadata section; loaders tolerate a missing
sidecar (the mask is then unlabeled and reports will refuse it).
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import LoadError, ShapeError
from ..transformer import ModelConfig, tensor_spec
from .mask import Mask

MAGIC = b"LTMK"
VERSION = 1


def save_mask(path: str | Path, mask: Mask) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<HI", VERSION, len(mask.arrays))]
    for name in sorted(mask.arrays):
        a = mask.arrays[name].ravel()
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<Q", a.size))
        parts.append(np.packbits(a, bitorder="little").tobytes())
    path.write_bytes(b"".join(parts))
    path.with_name(path.name + ".json").write_text(
        json.dumps(mask.meta, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise LoadError(
                f"{self.path}: truncated while reading {what} at byte offset {self.off} "
                f"(need {n} bytes, have {len(self.data) - self.off})"
            )
        out = self.data[self.off:self.off + n]
        self.off += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_mask(path: str | Path, config: ModelConfig) -> Mask:
    path = Path(path)
    r = _Reader(path.read_bytes(), path)
    if r.take(4, "magic") != MAGIC:
        raise LoadError(f"{path}: bad magic at byte offset 0 (not a mask file)")
    (version, count) = r.unpack("<HI", "header")
    if version != VERSION:
        raise LoadError(f"{path}: unsupported mask format version {version}")
    spec = tensor_spec(config)
    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        (name_len,) = r.unpack("<H", "name length")
        name = r.take(name_len, "name").decode("utf-8")
        (flat_len,) = r.unpack("<Q", f"length of {name!r}")
        nbytes = (flat_len + 7) // 8
        raw = r.take(nbytes, f"bitset of {name!r}")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                             count=flat_len, bitorder="little")
        if name not in spec:
            raise ShapeError(f"{path}: mask names tensor {name!r} unknown to this model config")
        shape = spec[name][0]
        if flat_len != int(np.prod(shape)):
            raise ShapeError(
                f"{path}: tensor {name!r} has {flat_len} entries, config expects {int(np.prod(shape))}"
            )
        arrays[name] = bits.reshape(shape)
    if r.off != len(r.data):
        raise LoadError(f"{path}: {len(r.data) - r.off} trailing bytes at offset {r.off}")

    meta_path = path.with_name(path.name + ".json")
    meta = {}
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
    return Mask(config, arrays, meta)
