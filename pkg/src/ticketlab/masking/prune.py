"""Pruning decisions: magnitude-based and random.

All decisions are pure functions of their inputs. Global magnitude
pruning pools surviving weights across every prunable tensor and removes
the smallest |w|; equal magnitudes are broken by (lexicographic tensor
name, flat index), so repeated calls are bit-identical.

Counts: per-round pruning removes round-half-away-from-zero
(fraction * remaining) weights; sparsity targeting removes however many
weights reach ceil(target * total) pruned in one adaptive step.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ShapeError
from ..numerics import Rng
from ..transformer import ModelConfig, Parameterization, tensor_spec
from .mask import Mask


def round_half_away(x: float) -> int:
    """Round a nonnegative count half away from zero."""
    return int(math.floor(x + 0.5))


def _survivor_order(params: Parameterization, mask: Mask):
    """Surviving coordinates sorted by (|w|, name, flat index) ascending.

    Returns (names, per-name flat index arrays, global sort order) where
    the order indexes into the concatenation over sorted names.
    """
    names = sorted(mask.arrays)
    mags = []
    locs = []
    for name in names:
        m = mask.arrays[name].ravel()
        w = params.backbone[name].data.ravel()
        idx = np.nonzero(m)[0]
        mags.append(np.abs(w[idx]).astype(np.float64))
        locs.append(idx)
    cat_mags = np.concatenate(mags) if mags else np.empty(0)
    # concatenation index encodes (name rank, flat index) lexicographic order
    order = np.lexsort((np.arange(cat_mags.size), cat_mags))
    return names, locs, order, [m.size for m in mags]


def _zero_positions(mask: Mask, names, locs, sizes, chosen: np.ndarray, meta: dict) -> Mask:
    out = mask.copy(meta)
    bounds = np.cumsum([0] + sizes)
    for i, name in enumerate(names):
        sel = chosen[(chosen >= bounds[i]) & (chosen < bounds[i + 1])] - bounds[i]
        if sel.size:
            flat = out.arrays[name].ravel()
            flat[locs[i][sel]] = 0
            out.arrays[name] = flat.reshape(out.arrays[name].shape)
    return out


def _check_pair(params: Parameterization, mask: Mask) -> None:
    if params.config != mask.config:
        raise ShapeError("mask and parameterization have different model configs")


def global_magnitude_prune(params: Parameterization, mask: Mask, fraction: float) -> Mask:
    """Remove round(fraction * remaining) smallest-magnitude survivors."""
    _check_pair(params, mask)
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"prune fraction must be in (0, 1), got {fraction}")
    names, locs, order, sizes = _survivor_order(params, mask)
    count = round_half_away(fraction * order.size)
    meta = dict(mask.meta)
    meta.update(method="global_magnitude_prune",
                round=int(mask.meta.get("round", 0)) + 1)
    return _zero_positions(mask, names, locs, sizes, order[:count], meta)


def prune_to_sparsity(params: Parameterization, mask: Mask, target_s: float) -> Mask:
    """Prune the smallest survivors until exactly ceil(target_s * total) are pruned.

    Raises ValueError when the mask is already sparser than the target.
    """
    _check_pair(params, mask)
    if not (0.0 <= target_s < 1.0):
        raise ValueError(f"target sparsity must be in [0, 1), got {target_s}")
    target_pruned = math.ceil(target_s * mask.total)
    extra = target_pruned - mask.pruned
    if extra < 0:
        raise ValueError(
            f"target sparsity {target_s} is below current sparsity {mask.pruned / mask.total:.6f}"
        )
    meta = dict(mask.meta)
    meta.update(method="prune_to_sparsity", target_sparsity=target_s)
    if extra == 0:
        return mask.copy(meta)
    names, locs, order, sizes = _survivor_order(params, mask)
    return _zero_positions(mask, names, locs, sizes, order[:extra], meta)


def random_mask(config: ModelConfig, sparsity: float, seed: int,
                scheme: str = "global", reference: Mask | None = None) -> Mask:
    """Uniform random mask at the requested sparsity.

    scheme 'global' prunes round(sparsity * total) positions drawn
    uniformly across all prunable tensors; 'layerwise-matched' copies the
    per-tensor pruned counts of ``reference`` but draws fresh positions
    within each tensor.
    """
    if not (0.0 <= sparsity < 1.0):
        raise ValueError(f"sparsity must be in [0, 1), got {sparsity}")
    if scheme not in ("global", "layerwise-matched"):
        raise ValueError(f"unknown random mask scheme {scheme!r}")
    base = Mask.ones(config)
    names = sorted(base.arrays)
    meta = {"method": f"random:{scheme}", "seed": seed, "round": 0}

    if scheme == "layerwise-matched":
        if reference is None:
            raise ValueError("layerwise-matched scheme requires a reference mask")
        if reference.config != config:
            raise ShapeError("reference mask has a different model config")
        counts = reference.per_tensor_pruned()
        for name in names:
            rng = Rng.from_seed(seed, f"random_mask/{name}")
            flat = base.arrays[name].ravel()
            k = counts[name]
            if k:
                flat[rng.choice(flat.size, k)] = 0
            base.arrays[name] = flat.reshape(base.arrays[name].shape)
        base.meta = meta
        return base

    total = base.total
    k = round_half_away(sparsity * total)
    rng = Rng.from_seed(seed, "random_mask/global")
    chosen = np.sort(rng.choice(total, k))
    offset = 0
    for name in names:
        flat = base.arrays[name].ravel()
        sel = chosen[(chosen >= offset) & (chosen < offset + flat.size)] - offset
        if sel.size:
            flat[sel] = 0
        base.arrays[name] = flat.reshape(base.arrays[name].shape)
        offset += flat.size
    base.meta = meta
    return base
