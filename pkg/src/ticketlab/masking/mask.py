"""Binary masks over the prunable tensor set.

A Mask always covers every prunable tensor of its ModelConfig (dense
tensors are all-ones), with one uint8 0/1 array per tensor. Metadata
records provenance: which operation produced the mask, for which task,
at which pruning round. Reports refuse masks with no provenance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError
from ..transformer import ModelConfig, Parameterization, tensor_spec


@dataclass
class Mask:
    config: ModelConfig
    arrays: dict[str, np.ndarray]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        spec = tensor_spec(self.config)
        want = {n for n, (_, p) in spec.items() if p}
        if set(self.arrays) != want:
            raise ShapeError(
                f"mask must cover exactly the prunable tensors; missing {sorted(want - set(self.arrays))}, "
                f"extra {sorted(set(self.arrays) - want)}"
            )
        for name in sorted(self.arrays):
            a = np.asarray(self.arrays[name], dtype=np.uint8)
            shape = spec[name][0]
            if a.shape != shape:
                raise ShapeError(f"mask tensor {name!r} has shape {a.shape}, expected {shape}")
            if a.size and a.max() > 1:
                raise ShapeError(f"mask tensor {name!r} contains values outside {{0, 1}}")
            self.arrays[name] = a

    @classmethod
    def ones(cls, config: ModelConfig, meta: dict | None = None) -> "Mask":
        spec = tensor_spec(config)
        arrays = {n: np.ones(s, dtype=np.uint8) for n, (s, p) in spec.items() if p}
        return cls(config, arrays, dict(meta or {}))

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def __contains__(self, name: str) -> bool:
        return name in self.arrays

    def copy(self, meta: dict | None = None) -> "Mask":
        return Mask(self.config, {n: a.copy() for n, a in self.arrays.items()},
                    dict(self.meta if meta is None else meta))

    @property
    def total(self) -> int:
        return sum(a.size for a in self.arrays.values())

    @property
    def pruned(self) -> int:
        return self.total - self.surviving

    @property
    def surviving(self) -> int:
        return int(sum(int(a.sum()) for a in self.arrays.values()))

    def sparsity(self) -> float:
        return self.pruned / self.total

    def per_tensor_pruned(self) -> dict[str, int]:
        return {n: int(a.size - a.sum()) for n, a in sorted(self.arrays.items())}


def sparsity(mask: Mask) -> float:
    """Fraction of prunable weights removed (0 = dense)."""
    return mask.pruned / mask.total


def is_subset(m_new: Mask, m_old: Mask) -> bool:
    """True when every surviving weight of ``m_new`` also survives in ``m_old``."""
    _check_comparable(m_new, m_old)
    return all(
        not np.any((m_new.arrays[n] == 1) & (m_old.arrays[n] == 0))
        for n in m_new.arrays
    )


def overlap(m1: Mask, m2: Mask) -> float:
    """Jaccard similarity of the *pruned* sets: |z1 & z2| / |z1 | z2|.

    Two dense masks overlap fully (1.0) by convention.
    """
    _check_comparable(m1, m2)
    inter = 0
    union = 0
    for n in m1.arrays:
        z1 = m1.arrays[n] == 0
        z2 = m2.arrays[n] == 0
        inter += int(np.count_nonzero(z1 & z2))
        union += int(np.count_nonzero(z1 | z2))
    if union == 0:
        return 1.0
    return inter / union


def apply(mask: Mask, params: Parameterization) -> Parameterization:
    """Copy of ``params`` with pruned coordinates set exactly to zero.

    Non-prunable tensors and the head are copied unchanged.
    """
    if mask.config != params.config:
        raise ShapeError("mask and parameterization have different model configs")
    out = params.clone()
    for name, m in mask.arrays.items():
        t = out.backbone[name]
        t.data = t.data * m.astype(t.data.dtype)
    return out


def _check_comparable(a: Mask, b: Mask) -> None:
    if set(a.arrays) != set(b.arrays):
        raise ShapeError("masks cover different tensor sets")
    for n in a.arrays:
        if a.arrays[n].shape != b.arrays[n].shape:
            raise ShapeError(f"mask tensor {n!r} shapes differ: {a.arrays[n].shape} vs {b.arrays[n].shape}")
