"""Parameter naming, initialization, and counting.

The backbone tensor set is a pure function of ModelConfig. Names sort
lexicographically into a stable global order (block indices are
zero-padded), which downstream pruning uses for deterministic
tie-breaking.

Prunable tensors are the weight matrices, including both embedding
tables; biases and layer-norm parameters are never pruned.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ShapeError
from ..numerics import Rng, Tensor, active_dtype
from .config import HeadSpec, ModelConfig

INIT_STD = 0.02
INIT_CLIP = 2.0  # truncation in standard units


def _block_prefix(config: ModelConfig, i: int) -> str:
    width = max(2, len(str(max(config.num_blocks - 1, 0))))
    return f"block{i:0{width}d}"


def tensor_spec(config: ModelConfig) -> dict[str, tuple[tuple, bool]]:
    """Ordered mapping name -> (shape, prunable)."""
    d, f = config.hidden_size, config.ffn_size
    spec: dict[str, tuple[tuple, bool]] = {
        "emb.tok": ((config.vocab_size, d), True),
        "emb.pos": ((config.max_seq_len, d), True),
        "emb.norm.gain": ((d,), False),
        "emb.norm.bias": ((d,), False),
    }
    for i in range(config.num_blocks):
        p = _block_prefix(config, i)
        for w in ("wq", "wk", "wv", "wo"):
            spec[f"{p}.attn.{w}"] = ((d, d), True)
        for b in ("bq", "bk", "bv", "bo"):
            spec[f"{p}.attn.{b}"] = ((d,), False)
        spec[f"{p}.attn.norm.gain"] = ((d,), False)
        spec[f"{p}.attn.norm.bias"] = ((d,), False)
        spec[f"{p}.ffn.w1"] = ((d, f), True)
        spec[f"{p}.ffn.b1"] = ((f,), False)
        spec[f"{p}.ffn.w2"] = ((f, d), True)
        spec[f"{p}.ffn.b2"] = ((d,), False)
        spec[f"{p}.ffn.norm.gain"] = ((d,), False)
        spec[f"{p}.ffn.norm.bias"] = ((d,), False)
    return spec


def prunable_names(config: ModelConfig) -> tuple[str, ...]:
    return tuple(n for n, (_, p) in tensor_spec(config).items() if p)


def count_params(config: ModelConfig) -> int:
    """Backbone parameter count, closed form.

    embeddings: V*d + S*d + 2d (embedding layer norm)
    per block:  4d^2 + 4d (attention) + 2d (attn norm)
                + 2*d*f + f + d (ffn) + 2d (ffn norm)
    """
    d, f = config.hidden_size, config.ffn_size
    emb = config.vocab_size * d + config.max_seq_len * d + 2 * d
    block = 4 * d * d + 4 * d + 2 * d + 2 * d * f + f + d + 2 * d
    return emb + config.num_blocks * block


def count_prunable(config: ModelConfig) -> int:
    return sum(math.prod(shape) for shape, p in tensor_spec(config).values() if p)


@dataclass
class Parameterization:
    """Backbone tensors plus an optional task head.

    A Parameterization is owned by one training run at a time; drivers
    pass frozen snapshots around and copy before mutating.
    """

    config: ModelConfig
    backbone: dict[str, Tensor]
    head_spec: HeadSpec | None = None
    head: dict[str, Tensor] = field(default_factory=dict)

    def __post_init__(self):
        spec = tensor_spec(self.config)
        if set(self.backbone) != set(spec):
            missing = set(spec) - set(self.backbone)
            extra = set(self.backbone) - set(spec)
            raise ShapeError(f"backbone tensor names do not match config (missing {sorted(missing)}, extra {sorted(extra)})")
        for name, (shape, _) in spec.items():
            if self.backbone[name].data.shape != shape:
                raise ShapeError(
                    f"tensor {name!r} has shape {self.backbone[name].data.shape}, expected {shape}"
                )

    @property
    def prunable(self) -> tuple[str, ...]:
        return prunable_names(self.config)

    def all_tensors(self) -> dict[str, Tensor]:
        """Backbone plus head tensors in one flat mapping."""
        merged = dict(self.backbone)
        merged.update(self.head)
        return merged

    def clone(self, requires_grad: bool | None = None) -> "Parameterization":
        def cp(t: Tensor) -> Tensor:
            rg = t.requires_grad if requires_grad is None else requires_grad
            return Tensor(t.data.copy(), requires_grad=rg, name=t.name)

        return Parameterization(
            config=self.config,
            backbone={n: cp(t) for n, t in self.backbone.items()},
            head_spec=self.head_spec,
            head={n: cp(t) for n, t in self.head.items()},
        )


def init_params(config: ModelConfig, seed: int) -> Parameterization:
    """Fresh backbone: weights ~ truncated normal(0, 0.02) within +-2 sigma,
    biases zero, layer-norm gains one.

    Each tensor draws from its own substream keyed by name, so the result
    is independent of iteration order and bit-identical per (seed, dtype).
    """
    dtype = active_dtype()
    backbone: dict[str, Tensor] = {}
    for name, (shape, prunable) in tensor_spec(config).items():
        if prunable:
            rng = Rng.from_seed(seed, f"init/{name}")
            vals = rng.truncated_normal(math.prod(shape), 0.0, INIT_STD, INIT_CLIP)
            data = vals.reshape(shape).astype(dtype)
        elif name.endswith("norm.gain"):
            data = np.ones(shape, dtype=dtype)
        else:
            data = np.zeros(shape, dtype=dtype)
        backbone[name] = Tensor(data, requires_grad=True, name=name)
    return Parameterization(config=config, backbone=backbone)


def attach_head(params: Parameterization, head_spec: HeadSpec, seed: int) -> Parameterization:
    """New Parameterization with a freshly initialized head.

    The backbone is copied bit-identically and left untouched; only the
    head tensors are new. Weight matrices draw from the same truncated
    normal as the backbone, biases start at zero.
    """
    if head_spec.kind == "classifier" and head_spec.num_classes > params.config.hidden_size * 4:
        raise ConfigError("classifier wider than makes sense for this backbone")
    out = params.clone()
    out.head_spec = head_spec
    out.head = {}
    dtype = active_dtype()
    for name, shape in head_spec.param_shapes(params.config).items():
        if name.endswith(".w"):
            rng = Rng.from_seed(seed, f"head/{name}")
            data = rng.truncated_normal(math.prod(shape), 0.0, INIT_STD, INIT_CLIP).reshape(shape).astype(dtype)
        else:
            data = np.zeros(shape, dtype=dtype)
        out.head[name] = Tensor(data, requires_grad=True, name=name)
    return out
