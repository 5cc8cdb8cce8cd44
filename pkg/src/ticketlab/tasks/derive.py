"""Label derivation rules over generated corpora.

Rules map a corpus with retained hidden paths / chain ids into a labeled
task:

  dominant-hidden-state (single-class)
      Binary: of the two hidden states that most often dominate a
      sequence, does state a occur more often than state b in this one?
      Ambiguous ties are dropped; classes are rebalanced to exactly
      50/50 per split by subsampling. Degenerate (needs >= 2 states that
      ever dominate).

  same-chain (pair-class)
      Two sequences joined by SEP; label 1 when both halves came from
      the same chain. Built balanced by construction. Degenerate when
      the corpus has a single chain (all-positive).

  state-fraction (regression)
      Fraction of tokens emitted while the hidden path sat in a
      designated state (default 0).

  mlm
      Masked-token prediction over the corpus itself; no labels.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..numerics import Rng
from ..transformer import HeadSpec
from .dataset import Dataset, Example
from .task import Task, TaskSpec
from .vocab import SEP

RULES = ("mlm", "dominant-hidden-state", "same-chain", "state-fraction")

_RULE_KIND = {
    "mlm": "mlm",
    "dominant-hidden-state": "single-class",
    "same-chain": "pair-class",
    "state-fraction": "regression",
}

_DEFAULT_METRIC = {
    "mlm": "accuracy",
    "single-class": "accuracy",
    "pair-class": "f1",
    "regression": "pearson",
}


def _require_hidden(dataset: Dataset, rule: str) -> None:
    if any(ex.hidden is None for ex in dataset.examples):
        raise DataError(f"rule {rule!r} needs a generated corpus with hidden paths")


def _dominant_states(dataset: Dataset) -> np.ndarray:
    doms = []
    for ex in dataset.examples:
        counts = np.bincount(ex.hidden)
        doms.append(int(np.argmax(counts)))  # argmax breaks ties toward low state
    return np.array(doms, dtype=np.int64)


def _balance(examples: list[Example], seed: int) -> list[Example]:
    """Subsample the majority class to exact balance, per split."""
    out: list[Example] = []
    for split in ("train", "eval"):
        pool = [ex for ex in examples if ex.split == split]
        zero = [ex for ex in pool if ex.label == 0]
        one = [ex for ex in pool if ex.label == 1]
        n = min(len(zero), len(one))
        if n == 0:
            raise DataError(f"split {split!r} lost a class entirely during balancing")
        rng = Rng.from_seed(seed, f"balance/{split}")
        zero = [zero[i] for i in sorted(rng.choice(len(zero), n).tolist())]
        one = [one[i] for i in sorted(rng.choice(len(one), n).tolist())]
        out.extend(zero)
        out.extend(one)
    return out


def _derive_dominant(dataset: Dataset, seed: int) -> tuple[Dataset, dict]:
    _require_hidden(dataset, "dominant-hidden-state")
    doms = _dominant_states(dataset)
    hist = np.bincount(doms)
    ranked = np.argsort(-hist, kind="stable")
    if hist.size < 2 or hist[ranked[1]] == 0:
        raise DataError(
            "dominant-hidden-state is degenerate: fewer than two states ever dominate "
            "(single-class labels)"
        )
    a, b = int(ranked[0]), int(ranked[1])
    examples = []
    for ex in dataset.examples:
        ca = int(np.sum(ex.hidden == a))
        cb = int(np.sum(ex.hidden == b))
        if ca == cb:
            continue  # ambiguous, dropped
        examples.append(Example(ids=ex.ids.copy(), split=ex.split,
                                label=int(ca > cb), chain=ex.chain))
    examples = _balance(examples, seed)
    out = Dataset(dataset.vocab, examples, dict(dataset.meta))
    out.meta["rule"] = {"name": "dominant-hidden-state", "states": [a, b]}
    return out, {"states": (a, b)}


def _derive_same_chain(dataset: Dataset, seed: int, max_seq_len: int | None) -> tuple[Dataset, dict]:
    chains = sorted({ex.chain for ex in dataset.examples if ex.chain is not None})
    if len(chains) < 2:
        raise DataError(
            "same-chain is degenerate: single-chain corpus gives all-positive labels"
        )
    # the two most populous chains carry the task
    sizes = {c: sum(1 for ex in dataset.examples if ex.chain == c) for c in chains}
    first, second = sorted(chains, key=lambda c: (-sizes[c], c))[:2]

    def join(x1: Example, x2: Example) -> np.ndarray:
        ids = np.concatenate([x1.ids, [SEP], x2.ids[1:]])  # drop second CLS
        if max_seq_len is not None and ids.size > max_seq_len:
            ids = ids[:max_seq_len]
            if not np.any(ids == SEP):
                raise DataError("max_seq_len too small to keep the SEP of a pair input")
        return ids.astype(np.int64)

    examples: list[Example] = []
    for split in ("train", "eval"):
        groups = {c: [ex for ex in dataset.examples if ex.split == split and ex.chain == c]
                  for c in (first, second)}
        rng = Rng.from_seed(seed, f"pairs/{split}")
        ga = [groups[first][i] for i in rng.permutation(len(groups[first]))]
        gb = [groups[second][i] for i in rng.permutation(len(groups[second]))]
        pos = []
        for grp in (ga, gb):
            for i in range(0, len(grp) - 1, 2):
                pos.append((grp[i], grp[i + 1]))
        rng2 = Rng.from_seed(seed, f"pairs/neg/{split}")
        ga2 = [groups[first][i] for i in rng2.permutation(len(groups[first]))]
        gb2 = [groups[second][i] for i in rng2.permutation(len(groups[second]))]
        neg = list(zip(ga2, gb2))
        n = min(len(pos), len(neg))
        if n == 0:
            raise DataError(f"split {split!r} is too small to build same-chain pairs")
        for (x1, x2) in pos[:n]:
            examples.append(Example(ids=join(x1, x2), split=split, label=1))
        for (x1, x2) in neg[:n]:
            examples.append(Example(ids=join(x1, x2), split=split, label=0))
    out = Dataset(dataset.vocab, examples, dict(dataset.meta))
    out.meta["rule"] = {"name": "same-chain", "chains": [first, second]}
    return out, {"chains": (first, second)}


def _derive_state_fraction(dataset: Dataset, designated: int) -> tuple[Dataset, dict]:
    _require_hidden(dataset, "state-fraction")
    examples = []
    for ex in dataset.examples:
        frac = float(np.mean(ex.hidden == designated))
        examples.append(Example(ids=ex.ids.copy(), split=ex.split, label=frac,
                                chain=ex.chain))
    out = Dataset(dataset.vocab, examples, dict(dataset.meta))
    out.meta["rule"] = {"name": "state-fraction", "state": designated}
    return out, {"state": designated}


def derive_task(dataset: Dataset, kind: str, rule: str, seed: int, *,
                task_id: str | None = None, metric_id: str | None = None,
                train_steps: int = 0, mask_rate: float = 0.15,
                num_classes: int = 2, designated_state: int = 0,
                max_seq_len: int | None = None) -> Task:
    """Turn a corpus into a labeled Task according to ``rule``.

    ``kind`` must agree with the rule's natural kind; it is accepted
    explicitly so call sites stay readable.
    """
    if rule not in RULES:
        raise DataError(f"unknown rule {rule!r}; expected one of {RULES}")
    if kind != _RULE_KIND[rule]:
        raise DataError(f"rule {rule!r} produces kind {_RULE_KIND[rule]!r}, not {kind!r}")

    if rule == "mlm":
        labeled = Dataset(dataset.vocab,
                          [Example(ids=ex.ids.copy(), split=ex.split) for ex in dataset.examples],
                          dict(dataset.meta))
        head = HeadSpec("mlm")
    elif rule == "dominant-hidden-state":
        labeled, _ = _derive_dominant(dataset, seed)
        head = HeadSpec("classifier", num_classes)
    elif rule == "same-chain":
        labeled, _ = _derive_same_chain(dataset, seed, max_seq_len)
        head = HeadSpec("classifier", num_classes)
    else:
        labeled, _ = _derive_state_fraction(dataset, designated_state)
        head = HeadSpec("regressor")

    spec = TaskSpec(
        task_id=task_id or rule,
        kind=kind,
        head=head,
        metric_id=metric_id or _DEFAULT_METRIC[kind],
        train_steps=train_steps,
        mask_rate=mask_rate,
    )
    return Task(spec=spec, dataset=labeled, seed=seed)
