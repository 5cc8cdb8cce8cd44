"""Masked-token batch construction.

Per sequence, exactly round(mask_rate * maskable) positions are replaced
by MASK (plain replacement, no mixed corruption), where maskable
excludes CLS, SEP and padding. Sequences with no maskable position are
skipped and reported. Targets are the original ids; the returned
position map doubles as the loss weight vector.
"""

from __future__ import annotations

import numpy as np

from ..errors import DataError
from ..masking import round_half_away
from ..numerics import Rng
from .dataset import Dataset, pad_batch
from .vocab import CLS, MASK, PAD, SEP


def mask_batch(ids: np.ndarray, mask_rate: float, rng: Rng):
    """Mask one padded (B, T) batch.

    Returns (inputs, targets, positions, skipped): inputs with MASK
    written in, targets = original ids, positions a uint8 (B, T) map of
    masked slots, skipped = count of rows with nothing maskable.
    """
    if not (0.0 < mask_rate < 1.0):
        raise DataError(f"mask_rate must be in (0, 1), got {mask_rate}")
    inputs = ids.copy()
    positions = np.zeros_like(ids, dtype=np.uint8)
    skipped = 0
    for b in range(ids.shape[0]):
        row = ids[b]
        maskable = np.nonzero((row != PAD) & (row != CLS) & (row != SEP))[0]
        if maskable.size == 0:
            skipped += 1
            continue
        k = round_half_away(mask_rate * maskable.size)
        if k == 0:
            continue
        chosen = maskable[rng.choice(maskable.size, k)]
        inputs[b, chosen] = MASK
        positions[b, chosen] = 1
    return inputs, ids, positions, skipped


def make_mlm_batches(dataset: Dataset, mask_rate: float, rng: Rng,
                     batch_size: int = 32, split: str = "eval"):
    """Fixed batches over one split, each masked once with ``rng``.

    Returns (batches, skipped_total) where each batch is a dict with
    inputs/targets/positions arrays. Used to freeze a deterministic
    evaluation set; training masks per-step instead.
    """
    idx = dataset.split_indices(split)
    batches = []
    skipped_total = 0
    for start in range(0, idx.size, batch_size):
        rows = [dataset.examples[int(i)].ids for i in idx[start:start + batch_size]]
        padded = pad_batch(rows, PAD)
        inputs, targets, positions, skipped = mask_batch(padded, mask_rate, rng)
        skipped_total += skipped
        batches.append({"inputs": inputs, "targets": targets, "positions": positions})
    return batches, skipped_total
