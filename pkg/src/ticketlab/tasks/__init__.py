"""Synthetic task family: HMM corpora, label rules, MLM batching, metrics."""

from .dataset import (
    Dataset,
    Example,
    load_dataset,
    load_text_corpus,
    pad_batch,
    save_dataset,
    subsample,
)
from .derive import RULES, derive_task
from .generator import Chain, GeneratorSpec, build_chains, gen_corpus
from .metrics import METRIC_IDS, MetricUndefined, average_ranks, metric
from .mlm import make_mlm_batches, mask_batch
from .task import TASK_KINDS, Batch, Task, TaskSpec
from .vocab import CLS, MASK, NUM_RESERVED, PAD, RESERVED, SEP, UNK, Vocab

__all__ = [
    "Batch",
    "CLS",
    "Chain",
    "Dataset",
    "Example",
    "GeneratorSpec",
    "MASK",
    "METRIC_IDS",
    "MetricUndefined",
    "NUM_RESERVED",
    "PAD",
    "RESERVED",
    "RULES",
    "SEP",
    "TASK_KINDS",
    "Task",
    "TaskSpec",
    "UNK",
    "Vocab",
    "average_ranks",
    "build_chains",
    "derive_task",
    "gen_corpus",
    "load_dataset",
    "load_text_corpus",
    "make_mlm_batches",
    "mask_batch",
    "metric",
    "pad_batch",
    "save_dataset",
    "subsample",
]
