"""Small BERT-style encoder: configs, parameters, forward pass."""

from .config import BERT_BASE, HEAD_KINDS, HeadSpec, ModelConfig
from .encoder import ATTENTION_NEG, forward
from .params import (
    INIT_CLIP,
    INIT_STD,
    Parameterization,
    attach_head,
    count_params,
    count_prunable,
    init_params,
    prunable_names,
    tensor_spec,
)

__all__ = [
    "ATTENTION_NEG",
    "BERT_BASE",
    "HEAD_KINDS",
    "HeadSpec",
    "INIT_CLIP",
    "INIT_STD",
    "ModelConfig",
    "Parameterization",
    "attach_head",
    "count_params",
    "count_prunable",
    "forward",
    "init_params",
    "prunable_names",
    "tensor_spec",
]
