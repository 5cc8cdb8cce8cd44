"""Mask algebra: creation, pruning decisions, baselines, persistence."""

from .io import load_mask, save_mask
from .mask import Mask, apply, is_subset, overlap, sparsity
from .prune import global_magnitude_prune, prune_to_sparsity, random_mask, round_half_away
from .reinit import random_reinit, shuffle_reinit

__all__ = [
    "Mask",
    "apply",
    "global_magnitude_prune",
    "is_subset",
    "load_mask",
    "overlap",
    "prune_to_sparsity",
    "random_mask",
    "random_reinit",
    "round_half_away",
    "save_mask",
    "shuffle_reinit",
    "sparsity",
]
