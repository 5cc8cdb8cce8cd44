"""Encoder forward pass.

BERT-style post-norm blocks: learned token + position embeddings with an
embedding layer norm, then per block multi-head self-attention and a
GELU feed-forward, each followed by residual + layer norm. First-token
pooling feeds the classifier/regressor heads; the MLM decoder is the
transposed (masked) token embedding plus a vocab bias. No dropout.

``mask``, when given, maps prunable tensor names to 0/1 arrays; masked
weights enter the graph as ``w * m``, so the forward equals the forward
of an explicitly zeroed copy and pruned weights receive zero gradient.
"""

from __future__ import annotations

import math

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import (
    Tensor,
    add,
    embedding_lookup,
    gelu,
    layer_norm,
    matmul,
    mul,
    reshape,
    slice_rows,
    softmax,
    swapaxes,
    take_position,
    transpose2d,
)
from .config import HeadSpec, ModelConfig
from .params import Parameterization, _block_prefix

ATTENTION_NEG = -1e9  # additive bias that removes padded keys from attention


def _mask_arrays(mask) -> dict | None:
    if mask is None:
        return None
    return getattr(mask, "arrays", mask)


def forward(params: Parameterization, head_spec: HeadSpec, mask, token_ids,
            pad_id: int | None = 0) -> Tensor:
    """Head outputs for a batch of token id rows.

    token_ids: (B, T) or (T,) integer array. Returns (B, T, V) logits for
    mlm heads, (B, num_classes) for classifiers, (B,) for regressors.
    """
    cfg = params.config
    ids = np.asarray(token_ids)
    if ids.ndim == 1:
        ids = ids[None, :]
    if ids.ndim != 2:
        raise DataError(f"token_ids must be 1d or 2d, got shape {ids.shape}")
    B, T = ids.shape
    if T > cfg.max_seq_len:
        raise DataError(f"sequence length {T} exceeds max_seq_len {cfg.max_seq_len}")
    if T < 1:
        raise DataError("empty sequence")
    if head_spec is None or params.head_spec is None or head_spec != params.head_spec:
        raise ConfigError(
            f"head mismatch: forward got {head_spec!r}, parameterization has {params.head_spec!r}"
        )

    marr = _mask_arrays(mask)

    def w(name: str):
        t = params.backbone[name]
        if marr is not None and name in marr:
            m = np.asarray(marr[name])
            if m.shape != t.data.shape:
                raise ConfigError(f"mask for {name!r} has shape {m.shape}, want {t.data.shape}")
            return mul(t, m.astype(t.data.dtype, copy=False))
        return t

    # embeddings
    h = add(embedding_lookup(w("emb.tok"), ids), slice_rows(w("emb.pos"), T))
    h = layer_norm(h, params.backbone["emb.norm.gain"], params.backbone["emb.norm.bias"])

    # additive attention bias silencing padded keys
    attn_bias = None
    if pad_id is not None and (ids == pad_id).any():
        attn_bias = np.where(ids == pad_id, ATTENTION_NEG, 0.0)[:, None, None, :]

    nh, hd = cfg.num_heads, cfg.head_dim
    inv_sqrt = 1.0 / math.sqrt(hd)
    for i in range(cfg.num_blocks):
        p = _block_prefix(cfg, i)

        def split_heads(x):
            return swapaxes(reshape(x, (B, T, nh, hd)), 1, 2)

        q = split_heads(add(matmul(h, w(f"{p}.attn.wq")), params.backbone[f"{p}.attn.bq"]))
        k = split_heads(add(matmul(h, w(f"{p}.attn.wk")), params.backbone[f"{p}.attn.bk"]))
        v = split_heads(add(matmul(h, w(f"{p}.attn.wv")), params.backbone[f"{p}.attn.bv"]))
        scores = mul(matmul(q, swapaxes(k, -1, -2)), inv_sqrt)
        if attn_bias is not None:
            scores = add(scores, attn_bias)
        ctx = matmul(softmax(scores, -1), v)
        merged = reshape(swapaxes(ctx, 1, 2), (B, T, cfg.hidden_size))
        attn_out = add(matmul(merged, w(f"{p}.attn.wo")), params.backbone[f"{p}.attn.bo"])
        h = layer_norm(add(h, attn_out),
                       params.backbone[f"{p}.attn.norm.gain"],
                       params.backbone[f"{p}.attn.norm.bias"])

        inner = gelu(add(matmul(h, w(f"{p}.ffn.w1")), params.backbone[f"{p}.ffn.b1"]))
        ffn_out = add(matmul(inner, w(f"{p}.ffn.w2")), params.backbone[f"{p}.ffn.b2"])
        h = layer_norm(add(h, ffn_out),
                       params.backbone[f"{p}.ffn.norm.gain"],
                       params.backbone[f"{p}.ffn.norm.bias"])

    if head_spec.kind == "mlm":
        return add(matmul(h, transpose2d(w("emb.tok"))), params.head["head.bias"])
    pooled = take_position(h, 0)
    out = add(matmul(pooled, params.head["head.w"]), params.head["head.b"])
    if head_spec.kind == "regressor":
        return reshape(out, (B,))
    return out
