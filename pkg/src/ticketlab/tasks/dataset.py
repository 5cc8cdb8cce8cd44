"""Datasets of token-id sequences with labels and split tags.

Every sequence begins with CLS; pair inputs contain exactly one SEP.
Generated corpora additionally retain, in memory only, the hidden-state
path and source-chain id of each sequence so task rules can derive
labels; those never serialize.

Line format (one example per line):

    split <TAB> label <TAB> space-separated token ids

Labels: integers for classification, ``repr`` floats for regression,
``-`` for none (MLM corpora).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import DataError
from ..numerics import Rng
from .vocab import CLS, SEP, UNK, Vocab

SPLITS = ("train", "eval")


@dataclass
class Example:
    ids: np.ndarray  # 1d int64, ids[0] == CLS
    split: str
    label: int | float | None = None
    chain: int | None = None
    hidden: np.ndarray | None = None


@dataclass
class Dataset:
    vocab: Vocab
    examples: list[Example]
    meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        V = len(self.vocab)
        for i, ex in enumerate(self.examples):
            if ex.split not in SPLITS:
                raise DataError(f"example {i}: unknown split {ex.split!r}")
            ids = ex.ids
            if ids.ndim != 1 or ids.size < 1:
                raise DataError(f"example {i}: empty sequence")
            if ids[0] != CLS:
                raise DataError(f"example {i}: sequence does not begin with CLS")
            if ids.min() < 0 or ids.max() >= V:
                raise DataError(f"example {i}: token id outside [0, {V})")
            seps = int(np.sum(ids == SEP))
            if seps > 1:
                raise DataError(f"example {i}: {seps} SEP tokens (at most one allowed)")

    def split_indices(self, split: str) -> np.ndarray:
        return np.array([i for i, ex in enumerate(self.examples) if ex.split == split],
                        dtype=np.int64)

    def subset(self, indices) -> "Dataset":
        return Dataset(self.vocab, [self.examples[int(i)] for i in indices], dict(self.meta))

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def train_size(self) -> int:
        return int(self.split_indices("train").size)

    @property
    def eval_size(self) -> int:
        return int(self.split_indices("eval").size)

    def max_len(self) -> int:
        return max(int(ex.ids.size) for ex in self.examples) if self.examples else 0


def _format_label(label) -> str:
    if label is None:
        return "-"
    if isinstance(label, (int, np.integer)):
        return str(int(label))
    return repr(float(label))


def _parse_label(text: str):
    if text == "-":
        return None
    try:
        return int(text)
    except ValueError:
        return float(text)


def save_dataset(path: str | Path, dataset: Dataset) -> None:
    lines = []
    for ex in dataset.examples:
        ids = " ".join(str(int(t)) for t in ex.ids)
        lines.append(f"{ex.split}\t{_format_label(ex.label)}\t{ids}\n")
    Path(path).write_text("".join(lines), encoding="utf-8")


def load_dataset(path: str | Path, vocab: Vocab) -> Dataset:
    examples = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(f"{path}:{lineno}: expected 3 tab-separated fields, got {len(parts)}")
        split, label, ids = parts
        examples.append(Example(
            ids=np.array([int(t) for t in ids.split()], dtype=np.int64),
            split=split,
            label=_parse_label(label),
        ))
    ds = Dataset(vocab, examples)
    ds.validate()
    return ds


def load_text_corpus(path: str | Path, vocab_path: str | Path,
                     max_seq_len: int = 64, eval_fraction: float = 0.0) -> Dataset:
    """Whitespace-tokenized text file -> CLS-prefixed id sequences.

    Unknown tokens map to UNK; sequences truncate to max_seq_len; empty
    lines are skipped and counted in ``meta['skipped_lines']``.
    """
    vocab = Vocab.load(vocab_path)
    index = {t: i for i, t in enumerate(vocab.tokens)}
    examples = []
    skipped = 0
    rows = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        toks = line.split()
        if not toks:
            skipped += 1
            continue
        ids = [CLS] + [index.get(t, UNK) for t in toks]
        rows.append(np.array(ids[:max_seq_len], dtype=np.int64))
    n_eval = int(round(eval_fraction * len(rows)))
    for i, ids in enumerate(rows):
        split = "eval" if i >= len(rows) - n_eval else "train"
        examples.append(Example(ids=ids, split=split))
    ds = Dataset(vocab, examples, meta={"skipped_lines": skipped})
    ds.validate()
    return ds


def subsample(dataset: Dataset, n: int, seed: int) -> Dataset:
    """Keep a uniform random subset of n training examples; eval untouched."""
    train_idx = dataset.split_indices("train")
    if n > train_idx.size:
        raise DataError(f"cannot subsample {n} of {train_idx.size} training examples")
    rng = Rng.from_seed(seed, "subsample")
    keep = set(train_idx[rng.choice(train_idx.size, n)].tolist())
    examples = [ex for i, ex in enumerate(dataset.examples)
                if ex.split != "train" or i in keep]
    out = Dataset(dataset.vocab, examples, dict(dataset.meta))
    out.meta["subsampled_to"] = n
    return out


def pad_batch(rows: list[np.ndarray], pad_id: int = 0) -> np.ndarray:
    """Stack variable-length id rows into a (B, T_max) array padded with pad_id."""
    width = max(r.size for r in rows)
    out = np.full((len(rows), width), pad_id, dtype=np.int64)
    for i, r in enumerate(rows):
        out[i, :r.size] = r
    return out
