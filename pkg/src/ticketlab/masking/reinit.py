"""Control-group weight sources for lottery-ticket comparisons.

random_reinit draws a completely fresh initialization (same distribution
as training-from-scratch init). shuffle_reinit keeps the trained value
histogram of every prunable tensor but destroys weight-position identity
by permuting values within the tensor.
"""

from __future__ import annotations

from ..numerics import Rng
from ..transformer import ModelConfig, Parameterization, init_params


def random_reinit(config: ModelConfig, seed: int) -> Parameterization:
    """Fresh truncated-normal backbone, independent of any trained weights."""
    return init_params(config, seed)


def shuffle_reinit(params: Parameterization, seed: int) -> Parameterization:
    """Permute each prunable tensor's values in place (per-tensor shuffle).

    Non-prunable tensors and any attached head are copied unchanged.
    """
    out = params.clone()
    for name in sorted(out.prunable):
        t = out.backbone[name]
        rng = Rng.from_seed(seed, f"shuffle/{name}")
        flat = t.data.ravel()
        t.data = flat[rng.permutation(flat.size)].reshape(t.data.shape)
    return out
