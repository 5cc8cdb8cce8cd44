"""AdamW with decoupled weight decay and a linear learning-rate schedule.

The update at optimizer step t (1-based, from zero moments) is

    m <- b1 m + (1-b1) g          mhat = m / (1 - b1^t)
    v <- b2 v + (1-b2) g^2        vhat = v / (1 - b2^t)
    theta <- theta - lr * mhat / (sqrt(vhat) + eps) - lr * wd * theta

with the decay term computed from the pre-update theta, separate from
the adaptive term. One zero-gradient step therefore shrinks weights by
exactly (1 - lr * wd). The schedule is plain linear decay to zero over
total_steps; no warmup, no gradient clipping.

Backbone and head tensors are updated identically; masking concerns live
in the training loop, not here.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, NumericError
from ..numerics import Tensor


@dataclass(frozen=True)
class TrainConfig:
    total_steps: int
    learning_rate: float = 5e-4
    batch_size: int = 16
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    eval_interval: int = 0  # 0 = evaluate only at the end

    def __post_init__(self):
        if self.total_steps < 0:
            raise ConfigError(f"total_steps must be >= 0, got {self.total_steps}")
        if self.learning_rate <= 0:
            raise ConfigError("learning_rate must be positive")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if self.weight_decay < 0:
            raise ConfigError("weight_decay must be nonnegative")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError("eps must be positive")
        if self.eval_interval < 0:
            raise ConfigError("eval_interval must be nonnegative")

    def to_dict(self) -> dict:
        return {
            "total_steps": self.total_steps,
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "seed": self.seed,
            "eval_interval": self.eval_interval,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        return cls(**d)

    def replace(self, **kw) -> "TrainConfig":
        d = self.to_dict()
        d.update(kw)
        return TrainConfig(**d)


def lr_at(config: TrainConfig, step: int) -> float:
    """Learning rate applied at 0-based ``step``: lr0 * (1 - step / t)."""
    if step < 0 or step > config.total_steps:
        raise ValueError(f"step {step} outside [0, {config.total_steps}]")
    if config.total_steps == 0:
        return 0.0
    return config.learning_rate * (1.0 - step / config.total_steps)


@dataclass
class OptimizerState:
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0

    @classmethod
    def zeros(cls, tensors: dict[str, Tensor]) -> "OptimizerState":
        return cls(
            m={n: np.zeros_like(t.data) for n, t in tensors.items()},
            v={n: np.zeros_like(t.data) for n, t in tensors.items()},
            step=0,
        )


def adamw_step(tensors: dict[str, Tensor], grads: dict[str, np.ndarray | None],
               state: OptimizerState, lr: float, config: TrainConfig) -> None:
    """One in-place update over all tensors. Missing grads count as zero."""
    state.step += 1
    t = state.step
    bc1 = 1.0 - config.beta1 ** t
    bc2 = 1.0 - config.beta2 ** t
    for name, tensor in tensors.items():
        g = grads.get(name)
        if g is None:
            g = np.zeros_like(tensor.data)
        elif not np.all(np.isfinite(g)):
            raise NumericError(f"non-finite gradient for tensor {name!r}")
        m = state.m[name]
        v = state.v[name]
        m *= config.beta1
        m += (1.0 - config.beta1) * g
        v *= config.beta2
        v += (1.0 - config.beta2) * (g * g)
        adaptive = (m / bc1) / (np.sqrt(v / bc2) + config.eps)
        tensor.data = tensor.data - lr * adaptive - (lr * config.weight_decay) * tensor.data
