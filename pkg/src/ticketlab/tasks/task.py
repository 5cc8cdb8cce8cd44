"""Task bundles: spec + labeled data + batch assembly.

A Task is what the training loop consumes. It owns the split index
lists, pads batches, applies MLM masking (per-step for training, frozen
once for evaluation), and knows its metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import Rng
from ..transformer import HeadSpec
from .dataset import Dataset, pad_batch
from .metrics import METRIC_IDS
from .mlm import make_mlm_batches, mask_batch
from .vocab import PAD

TASK_KINDS = ("mlm", "single-class", "pair-class", "regression")

_KIND_METRICS = {
    "mlm": ("accuracy",),
    "single-class": ("accuracy", "f1", "mcc"),
    "pair-class": ("accuracy", "f1", "mcc"),
    "regression": ("pearson", "spearman"),
}


@dataclass(frozen=True)
class TaskSpec:
    task_id: str
    kind: str
    head: HeadSpec
    metric_id: str
    train_steps: int = 0
    mask_rate: float = 0.15
    dataset_ref: str = "<memory>"

    def __post_init__(self):
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {self.kind!r}; expected one of {TASK_KINDS}")
        if self.metric_id not in METRIC_IDS:
            raise ConfigError(f"unknown metric {self.metric_id!r}")
        if self.metric_id not in _KIND_METRICS[self.kind]:
            raise ConfigError(
                f"metric {self.metric_id!r} is incompatible with kind {self.kind!r} "
                f"(allowed: {_KIND_METRICS[self.kind]})"
            )
        want = {"mlm": "mlm", "single-class": "classifier",
                "pair-class": "classifier", "regression": "regressor"}[self.kind]
        if self.head.kind != want:
            raise ConfigError(f"task kind {self.kind!r} needs a {want} head, got {self.head.kind!r}")

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": self.kind,
            "head": self.head.to_dict(),
            "metric_id": self.metric_id,
            "train_steps": self.train_steps,
            "mask_rate": self.mask_rate,
            "dataset_ref": self.dataset_ref,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TaskSpec":
        d = dict(d)
        d["head"] = HeadSpec.from_dict(d["head"])
        return cls(**d)


@dataclass
class Batch:
    inputs: np.ndarray                 # (B, T) int ids
    targets: np.ndarray                # (B,) labels, or flat (B*T,) mlm targets
    weights: np.ndarray | None = None  # flat (B*T,) 0/1 loss positions (mlm)


@dataclass
class Task:
    spec: TaskSpec
    dataset: Dataset
    seed: int = 0
    _train_idx: np.ndarray = field(init=False, repr=False)
    _eval_cache: list | None = field(init=False, default=None, repr=False)

    def __post_init__(self):
        self.dataset.validate()
        self._train_idx = self.dataset.split_indices("train")
        if self._train_idx.size == 0:
            raise DataError(f"task {self.spec.task_id!r} has an empty training split")
        if self.spec.kind != "mlm":
            for i, ex in enumerate(self.dataset.examples):
                if ex.label is None:
                    raise DataError(f"task {self.spec.task_id!r}: example {i} has no label")

    @property
    def train_size(self) -> int:
        return int(self._train_idx.size)

    @property
    def is_mlm(self) -> bool:
        return self.spec.kind == "mlm"

    def refresh_splits(self) -> None:
        """Re-read split indices after the dataset was subsampled in place."""
        self._train_idx = self.dataset.split_indices("train")
        self._eval_cache = None

    def _labels(self, indices) -> np.ndarray:
        labs = [self.dataset.examples[int(i)].label for i in indices]
        if self.spec.kind == "regression":
            return np.array(labs, dtype=np.float64)
        return np.array(labs, dtype=np.int64)

    def make_batch(self, split_local: np.ndarray, mlm_rng: Rng | None = None) -> Batch:
        """Assemble a training batch from train-split-local indices."""
        idx = self._train_idx[split_local]
        rows = [self.dataset.examples[int(i)].ids for i in idx]
        padded = pad_batch(rows, PAD)
        if self.is_mlm:
            if mlm_rng is None:
                raise ConfigError("mlm batches need a masking rng")
            inputs, targets, positions, _ = mask_batch(padded, self.spec.mask_rate, mlm_rng)
            return Batch(inputs=inputs, targets=targets.ravel(),
                         weights=positions.ravel().astype(np.float64))
        return Batch(inputs=padded, targets=self._labels(idx))

    def eval_batches(self, batch_size: int = 64) -> list[Batch]:
        """Deterministic evaluation batches; MLM masking frozen at first call."""
        if self._eval_cache is not None:
            return self._eval_cache
        if self.is_mlm:
            raw, _ = make_mlm_batches(self.dataset, self.spec.mask_rate,
                                      Rng.from_seed(self.seed, f"eval_mask/{self.spec.task_id}"),
                                      batch_size=batch_size, split="eval")
            out = [Batch(inputs=b["inputs"], targets=b["targets"].ravel(),
                         weights=b["positions"].ravel().astype(np.float64))
                   for b in raw]
        else:
            idx = self.dataset.split_indices("eval")
            if idx.size == 0:
                raise DataError(f"task {self.spec.task_id!r} has an empty eval split")
            out = []
            for start in range(0, idx.size, batch_size):
                part = idx[start:start + batch_size]
                rows = [self.dataset.examples[int(i)].ids for i in part]
                out.append(Batch(inputs=pad_batch(rows, PAD), targets=self._labels(part)))
        self._eval_cache = out
        return out
