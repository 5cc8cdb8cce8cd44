"""Checkpoints: full training state with bit-exact round trips.

Binary layout (little-endian):

    magic       4 bytes  b"LTCK"
    version     u16      currently 1
    fingerprint 32 bytes sha256 of the producing run's config
    step        u64      completed optimizer steps
    count       u32      number of tensors
    per tensor:
      name_len u16, name UTF-8
      rank u32, dims rank * u32
      dtype u8 (0 = float32, 1 = float64)
      data  raw little-endian IEEE values
    rng_count   u32
    per stream: label_len u16, label UTF-8, state 32 bytes

Tensor names are namespaced: ``theta/`` backbone, ``gamma/`` head,
``opt.m/`` and ``opt.v/`` optimizer moments. RNG streams are stored as
labeled 32-byte state blobs, which is what makes resume-from-checkpoint
bit-identical to an uninterrupted run.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import LoadError
from ..numerics import Rng, Tensor, active_dtype
from ..transformer import HeadSpec, ModelConfig, Parameterization
from .optimizer import OptimizerState

MAGIC = b"LTCK"
VERSION = 1
_DTYPE_TAGS = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_TAG_DTYPES = {0: np.dtype(np.float32), 1: np.dtype(np.float64)}


@dataclass
class Checkpoint:
    step: int
    fingerprint: bytes
    tensors: dict[str, np.ndarray]
    rng_states: dict[str, bytes] = field(default_factory=dict)

    def __post_init__(self):
        if len(self.fingerprint) != 32:
            raise ValueError(f"fingerprint must be 32 bytes, got {len(self.fingerprint)}")

    @classmethod
    def capture(cls, params: Parameterization, opt: OptimizerState | None,
                rngs: dict[str, Rng], step: int, fingerprint: bytes) -> "Checkpoint":
        tensors: dict[str, np.ndarray] = {}
        for n, t in params.backbone.items():
            tensors[f"theta/{n}"] = t.data.copy()
        for n, t in params.head.items():
            tensors[f"gamma/{n}"] = t.data.copy()
        if opt is not None:
            for n, a in opt.m.items():
                tensors[f"opt.m/{n}"] = a.copy()
            for n, a in opt.v.items():
                tensors[f"opt.v/{n}"] = a.copy()
        return cls(
            step=step,
            fingerprint=fingerprint,
            tensors=tensors,
            rng_states={label: rng.state_blob() for label, rng in rngs.items()},
        )

    # -- reconstruction ----------------------------------------------------

    def theta(self) -> dict[str, np.ndarray]:
        return {n[len("theta/"):]: a for n, a in self.tensors.items() if n.startswith("theta/")}

    def gamma(self) -> dict[str, np.ndarray]:
        return {n[len("gamma/"):]: a for n, a in self.tensors.items() if n.startswith("gamma/")}

    def restore_params(self, config: ModelConfig, head_spec: HeadSpec | None) -> Parameterization:
        """Rebuild a Parameterization with the stored values, bit-exact."""
        want = active_dtype()

        def as_tensor(name: str, a: np.ndarray) -> Tensor:
            if a.dtype != want:
                raise LoadError(
                    f"checkpoint tensor {name!r} is {a.dtype}, run dtype is {np.dtype(want)}"
                )
            t = Tensor(np.zeros((), dtype=want), requires_grad=True, name=name)
            t.data = a.copy()
            return t

        backbone = {n: as_tensor(n, a) for n, a in self.theta().items()}
        head = {n: as_tensor(n, a) for n, a in self.gamma().items()}
        return Parameterization(config=config, backbone=backbone,
                                head_spec=head_spec, head=head)

    def restore_optimizer(self) -> OptimizerState | None:
        m = {n[len("opt.m/"):]: a.copy() for n, a in self.tensors.items() if n.startswith("opt.m/")}
        v = {n[len("opt.v/"):]: a.copy() for n, a in self.tensors.items() if n.startswith("opt.v/")}
        if not m and not v:
            return None
        return OptimizerState(m=m, v=v, step=self.step)

    def restore_rng(self, label: str) -> Rng:
        if label not in self.rng_states:
            raise LoadError(f"checkpoint has no rng stream {label!r}; has {sorted(self.rng_states)}")
        return Rng.from_blob(self.rng_states[label])


def save_checkpoint(path: str | Path, ckpt: Checkpoint) -> None:
    path = Path(path)
    parts = [MAGIC, struct.pack("<H", VERSION), ckpt.fingerprint,
             struct.pack("<QI", ckpt.step, len(ckpt.tensors))]
    for name in sorted(ckpt.tensors):
        a = ckpt.tensors[name]
        if a.dtype not in _DTYPE_TAGS:
            raise ValueError(f"unsupported checkpoint dtype {a.dtype} for {name!r}")
        nb = name.encode("utf-8")
        parts.append(struct.pack("<H", len(nb)))
        parts.append(nb)
        parts.append(struct.pack("<I", a.ndim))
        parts.append(struct.pack(f"<{a.ndim}I", *a.shape))
        parts.append(struct.pack("<B", _DTYPE_TAGS[a.dtype]))
        parts.append(np.ascontiguousarray(a, dtype=a.dtype.newbyteorder("<")).tobytes())
    parts.append(struct.pack("<I", len(ckpt.rng_states)))
    for label in sorted(ckpt.rng_states):
        blob = ckpt.rng_states[label]
        if len(blob) != 32:
            raise ValueError(f"rng state for {label!r} must be 32 bytes")
        lb = label.encode("utf-8")
        parts.append(struct.pack("<H", len(lb)))
        parts.append(lb)
        parts.append(blob)
    path.write_bytes(b"".join(parts))


def load_checkpoint(path: str | Path, expect_fingerprint: bytes | None = None) -> Checkpoint:
    path = Path(path)
    data = path.read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise LoadError(
                f"{path}: truncated while reading {what} at byte offset {off} "
                f"(need {n} bytes, have {len(data) - off})"
            )
        out = data[off:off + n]
        off += n
        return out

    if take(4, "magic") != MAGIC:
        raise LoadError(f"{path}: bad magic at byte offset 0 (not a checkpoint)")
    (version,) = struct.unpack("<H", take(2, "version"))
    if version != VERSION:
        raise LoadError(f"{path}: unsupported checkpoint version {version}")
    fingerprint = take(32, "fingerprint")
    step, count = struct.unpack("<QI", take(12, "header"))
    tensors: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<H", take(2, "name length"))
        name = take(nlen, "name").decode("utf-8")
        (rank,) = struct.unpack("<I", take(4, f"rank of {name!r}"))
        dims = struct.unpack(f"<{rank}I", take(4 * rank, f"dims of {name!r}"))
        (tag,) = struct.unpack("<B", take(1, f"dtype of {name!r}"))
        if tag not in _TAG_DTYPES:
            raise LoadError(f"{path}: unknown dtype tag {tag} for {name!r} at offset {off - 1}")
        dt = _TAG_DTYPES[tag]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        raw = take(nbytes, f"data of {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=dt.newbyteorder("<")).astype(dt).reshape(dims)
    (rng_count,) = struct.unpack("<I", take(4, "rng count"))
    rng_states: dict[str, bytes] = {}
    for _ in range(rng_count):
        (llen,) = struct.unpack("<H", take(2, "rng label length"))
        label = take(llen, "rng label").decode("utf-8")
        rng_states[label] = take(32, f"rng state {label!r}")
    if off != len(data):
        raise LoadError(f"{path}: {len(data) - off} trailing bytes at offset {off}")

    if expect_fingerprint is not None and fingerprint != expect_fingerprint:
        raise LoadError(
            f"{path}: config fingerprint mismatch "
            f"(file {fingerprint.hex()[:12]}..., expected {expect_fingerprint.hex()[:12]}...)"
        )
    return Checkpoint(step=step, fingerprint=fingerprint, tensors=tensors,
                      rng_states=rng_states)
