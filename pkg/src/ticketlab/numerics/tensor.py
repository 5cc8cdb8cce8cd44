"""Tensors and reverse-mode automatic differentiation on a tape.

A ``Tape`` is a Wengert list: ops executed while a tape is active append
one record each (inputs, output, backward closure) in forward order.
``backward`` replays the records in reverse, accumulating cotangents;
gradient accumulation is summation over uses. A tape supports exactly
one backward pass and is cleared afterwards; replaying a dead tape is a
state error.

Tensors and tapes are confined to one worker process at a time; there is
no locking.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError, StateError
from .dtype import active_dtype

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered op records for one forward build."""

    __slots__ = ("_records", "_alive")

    def __init__(self):
        self._records: list[tuple] = []
        self._alive = True

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPE_STACK.pop()

    @property
    def alive(self) -> bool:
        return self._alive

    def __len__(self) -> int:
        return len(self._records)

    def record(self, op: str, inputs: tuple, out: "Tensor", backward) -> None:
        self._records.append((op, inputs, out, backward))


def active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


class Tensor:
    """A float array plus an optional gradient buffer.

    ``requires_grad`` marks leaves created by the caller; op outputs set
    it when any differentiable input requires grad under a live tape.
    ``grad``, when present, always has the same shape as ``data``.
    """

    __slots__ = ("data", "grad", "requires_grad", "name", "_tape")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=active_dtype())
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self.name = name
        self._tape: Tape | None = None

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), requires_grad=self.requires_grad, name=self.name)
        return t

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.data.shape}, dtype={self.data.dtype}{tag})"

    # operator sugar; the functions live in ops.py
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(self, other)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)


def _as_data(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=active_dtype())


def make_output(op: str, inputs: tuple, out_data: np.ndarray, backward) -> Tensor:
    """Wrap an op result, recording it when gradients are being traced.

    ``backward`` maps the output cotangent to one cotangent per entry of
    ``inputs`` (None for non-tensor or non-differentiable arguments).
    """
    out = Tensor(out_data)
    tape = active_tape()
    needs = tape is not None and tape._alive and any(
        isinstance(t, Tensor) and t.requires_grad for t in inputs
    )
    if needs:
        out.requires_grad = True
        out._tape = tape
        tape.record(op, inputs, out, backward)
    return out


def backward(loss: Tensor) -> None:
    """Reverse sweep from a scalar loss; accumulates into leaf ``.grad``.

    The loss tape dies afterwards: records are dropped and a second
    backward raises ``StateError``.
    """
    if loss.data.shape != ():
        raise ShapeError(f"backward requires a scalar loss, got shape {loss.data.shape}")
    tape = loss._tape
    if tape is None:
        raise StateError("loss is not attached to a tape (no grad was traced)")
    if not tape._alive:
        raise StateError("backward on a dead tape")

    cotangents: dict[int, np.ndarray] = {id(loss): np.ones((), dtype=loss.data.dtype)}
    for op, inputs, out, back in reversed(tape._records):
        g = cotangents.pop(id(out), None)
        if g is None:
            continue
        grads = back(g)
        for inp, gi in zip(inputs, grads):
            if gi is None or not isinstance(inp, Tensor) or not inp.requires_grad:
                continue
            if gi.shape != inp.data.shape:
                raise ShapeError(
                    f"{op}: gradient shape {gi.shape} does not match input shape {inp.data.shape}"
                )
            if inp._tape is tape:
                acc = cotangents.get(id(inp))
                cotangents[id(inp)] = gi if acc is None else acc + gi
            else:
                inp.grad = gi.copy() if inp.grad is None else inp.grad + gi
    tape._alive = False
    tape._records.clear()
