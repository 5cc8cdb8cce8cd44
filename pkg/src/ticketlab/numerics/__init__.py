"""Numerics: tensors, tape autodiff, precision control, deterministic RNG."""

from .dtype import active_dtype, dtype_name, set_dtype, use_dtype
from .ops import (
    add,
    cross_entropy,
    embedding_lookup,
    gelu,
    layer_norm,
    matmul,
    mse,
    mul,
    reshape,
    slice_rows,
    softmax,
    sub,
    swapaxes,
    take_position,
    transpose2d,
)
from .rng import ALGORITHM, Rng, derive_key
from .tensor import Tape, Tensor, active_tape, backward

__all__ = [
    "ALGORITHM",
    "Rng",
    "Tape",
    "Tensor",
    "active_dtype",
    "active_tape",
    "add",
    "backward",
    "cross_entropy",
    "derive_key",
    "dtype_name",
    "embedding_lookup",
    "gelu",
    "layer_norm",
    "matmul",
    "mse",
    "mul",
    "reshape",
    "set_dtype",
    "slice_rows",
    "softmax",
    "sub",
    "swapaxes",
    "take_position",
    "transpose2d",
    "use_dtype",
]
