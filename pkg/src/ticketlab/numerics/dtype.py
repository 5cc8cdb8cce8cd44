"""Run-global float precision.

Precision is a per-run global rather than a per-tensor attribute: every
tensor created after ``set_dtype`` uses the active dtype, which keeps
mixed-precision bugs out of scope. Experiments default to 32-bit;
gradient-checking tests switch to 64-bit.
"""

from __future__ import annotations

import contextlib

import numpy as np

from ..errors import ConfigError

_NAMES = {"f32": np.float32, "f64": np.float64}
_active = np.float32


def set_dtype(name: str) -> None:
    """Set the active float dtype for the run. ``name`` is 'f32' or 'f64'."""
    global _active
    if name not in _NAMES:
        raise ConfigError(f"unknown dtype {name!r}; expected one of {sorted(_NAMES)}")
    _active = _NAMES[name]


def active_dtype() -> type:
    return _active


def dtype_name() -> str:
    return "f32" if _active is np.float32 else "f64"


@contextlib.contextmanager
def use_dtype(name: str):
    """Temporarily switch precision (used by tests)."""
    prev = dtype_name()
    set_dtype(name)
    try:
        yield
    finally:
        set_dtype(prev)
