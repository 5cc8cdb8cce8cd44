"""Model and head configuration."""

from __future__ import annotations

import math
from dataclasses import dataclass

from ..errors import ConfigError

HEAD_KINDS = ("mlm", "classifier", "regressor")


@dataclass(frozen=True)
class ModelConfig:
    """Shape of the encoder backbone.

    Defaults are the laboratory toy scale. ``ffn_size`` of None resolves
    to 4 * hidden_size.
    """

    num_blocks: int = 2
    hidden_size: int = 32
    num_heads: int = 2
    ffn_size: int | None = None
    vocab_size: int = 64
    max_seq_len: int = 64

    def __post_init__(self):
        if self.ffn_size is None:
            object.__setattr__(self, "ffn_size", 4 * self.hidden_size)
        for field in ("num_blocks", "hidden_size", "num_heads", "ffn_size",
                      "vocab_size", "max_seq_len"):
            v = getattr(self, field)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"{field} must be a nonnegative integer, got {v!r}")
        if self.hidden_size < 1 or self.vocab_size < 1 or self.max_seq_len < 1:
            raise ConfigError("hidden_size, vocab_size and max_seq_len must be >= 1")
        if self.num_heads < 1:
            raise ConfigError("num_heads must be >= 1")
        if self.hidden_size % self.num_heads != 0:
            raise ConfigError(
                f"hidden_size {self.hidden_size} is not divisible by num_heads {self.num_heads}"
            )

    @property
    def head_dim(self) -> int:
        return self.hidden_size // self.num_heads

    def to_dict(self) -> dict:
        return {
            "num_blocks": self.num_blocks,
            "hidden_size": self.hidden_size,
            "num_heads": self.num_heads,
            "ffn_size": self.ffn_size,
            "vocab_size": self.vocab_size,
            "max_seq_len": self.max_seq_len,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


# Reference full-scale shape, used only to validate parameter counting.
BERT_BASE = ModelConfig(num_blocks=12, hidden_size=768, num_heads=12,
                        ffn_size=3072, vocab_size=30522, max_seq_len=512)


@dataclass(frozen=True)
class HeadSpec:
    """Task head attached on top of the encoder.

    kinds:
      mlm        - per-position vocab logits; the decoder shares the token
                   embedding matrix (transposed), so the head owns only a
                   per-vocab bias. Keeps task-specific parameters tiny.
      classifier - first-token (CLS) pooled linear map to num_classes.
      regressor  - first-token pooled linear map to one real output.
    """

    kind: str = "classifier"
    num_classes: int = 2

    def __post_init__(self):
        if self.kind not in HEAD_KINDS:
            raise ConfigError(f"unknown head kind {self.kind!r}; expected one of {HEAD_KINDS}")
        if self.kind == "classifier" and self.num_classes < 2:
            raise ConfigError("classifier heads need num_classes >= 2")

    def param_shapes(self, config: ModelConfig) -> dict[str, tuple]:
        d = config.hidden_size
        if self.kind == "mlm":
            return {"head.bias": (config.vocab_size,)}
        if self.kind == "classifier":
            return {"head.w": (d, self.num_classes), "head.b": (self.num_classes,)}
        return {"head.w": (d, 1), "head.b": (1,)}

    def param_count(self, config: ModelConfig) -> int:
        return sum(math.prod(s) for s in self.param_shapes(config).values())

    def to_dict(self) -> dict:
        return {"kind": self.kind, "num_classes": self.num_classes}

    @classmethod
    def from_dict(cls, d: dict) -> "HeadSpec":
        return cls(**d)
