"""Encoder: parameter accounting, init rules, and a hand-rolled forward oracle."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ticketlab.errors import ConfigError, DataError, ShapeError
from ticketlab.numerics import Tape, Tensor, backward, matmul, reshape
from ticketlab.transformer import (
    BERT_BASE,
    INIT_CLIP,
    INIT_STD,
    HeadSpec,
    ModelConfig,
    Parameterization,
    attach_head,
    count_params,
    count_prunable,
    forward,
    init_params,
    prunable_names,
    tensor_spec,
)

from .conftest import rand_array


class TestParameterCounting:
    def test_closed_form_equals_enumeration(self, tiny_config):
        for cfg in (tiny_config, ModelConfig(), BERT_BASE,
                    ModelConfig(num_blocks=3, hidden_size=16, num_heads=4,
                                ffn_size=40, vocab_size=11, max_seq_len=9)):
            enumerated = sum(math.prod(s) for s, _ in tensor_spec(cfg).values())
            assert count_params(cfg) == enumerated

    def test_reference_scale_count(self):
        # 12 blocks, d=768, f=3072, V=30522, S=512
        assert count_params(BERT_BASE) == 108_890_112
        assert abs(count_params(BERT_BASE) - 1.10e8) / 1.10e8 < 0.05

    def test_prunable_is_weight_matrices_only(self, tiny_config):
        spec = tensor_spec(tiny_config)
        names = prunable_names(tiny_config)
        for n in names:
            shape, flag = spec[n]
            assert flag
            assert len(shape) == 2, n  # matrices and embedding tables
        for n, (shape, flag) in spec.items():
            if n not in names:
                assert not flag
                assert "norm" in n or n.split(".")[-1].startswith("b")

    def test_count_prunable(self, tiny_config):
        spec = tensor_spec(tiny_config)
        want = sum(math.prod(s) for s, flag in spec.values() if flag)
        assert count_prunable(tiny_config) == want

    def test_block_names_zero_padded_and_sorted(self):
        cfg = ModelConfig(num_blocks=12, hidden_size=8, num_heads=2,
                          vocab_size=8, max_seq_len=4)
        names = list(tensor_spec(cfg))
        blocks = sorted(n for n in names if n.startswith("block"))
        assert any(n.startswith("block00.") for n in blocks)
        assert any(n.startswith("block11.") for n in blocks)
        # lexicographic order equals numeric block order
        order = [n.split(".")[0] for n in blocks]
        assert order == sorted(order)

    @settings(max_examples=25, deadline=None)
    @given(blocks=st.integers(0, 4), d=st.sampled_from([4, 8, 12]),
           ffn=st.integers(1, 40), v=st.integers(6, 40), s=st.integers(1, 16))
    def test_counting_property(self, blocks, d, ffn, v, s):
        cfg = ModelConfig(num_blocks=blocks, hidden_size=d, num_heads=2,
                          ffn_size=ffn, vocab_size=v, max_seq_len=s)
        spec = tensor_spec(cfg)
        assert count_params(cfg) == sum(math.prod(sh) for sh, _ in spec.values())
        assert count_prunable(cfg) <= count_params(cfg)


class TestConfigValidation:
    def test_ffn_defaults_to_4x(self):
        assert ModelConfig(hidden_size=20, num_heads=2).ffn_size == 80

    def test_heads_must_divide_hidden(self):
        with pytest.raises(ConfigError):
            ModelConfig(hidden_size=10, num_heads=3)

    def test_head_spec_kinds(self):
        with pytest.raises(ConfigError):
            HeadSpec("span")
        with pytest.raises(ConfigError):
            HeadSpec("classifier", num_classes=1)

    def test_roundtrip_dicts(self, tiny_config):
        assert ModelConfig.from_dict(tiny_config.to_dict()) == tiny_config
        hs = HeadSpec("mlm")
        assert HeadSpec.from_dict(hs.to_dict()) == hs


class TestInit:
    def test_weights_clipped_and_scaled(self, tiny_params):
        for name in tiny_params.prunable:
            vals = tiny_params.backbone[name].data
            assert np.all(np.abs(vals) <= INIT_CLIP * INIT_STD + 1e-7)
            assert 0.5 * INIT_STD < vals.std() < 1.1 * INIT_STD

    def test_biases_zero_gains_one(self, tiny_config, tiny_params):
        for name, (shape, prunable) in tensor_spec(tiny_config).items():
            if prunable:
                continue
            data = tiny_params.backbone[name].data
            want = 1.0 if name.endswith("norm.gain") else 0.0
            assert np.all(data == want), name

    def test_deterministic_per_seed(self, tiny_config):
        a = init_params(tiny_config, seed=5)
        b = init_params(tiny_config, seed=5)
        c = init_params(tiny_config, seed=6)
        for n in a.backbone:
            assert np.array_equal(a.backbone[n].data, b.backbone[n].data)
        assert not np.array_equal(a.backbone["emb.tok"].data, c.backbone["emb.tok"].data)

    def test_per_tensor_substreams_are_structure_independent(self, tiny_config):
        # shared tensor names draw identical values even if the config
        # grows extra blocks, because streams are keyed by name
        bigger = ModelConfig(num_blocks=2, hidden_size=tiny_config.hidden_size,
                             num_heads=tiny_config.num_heads,
                             ffn_size=tiny_config.ffn_size,
                             vocab_size=tiny_config.vocab_size,
                             max_seq_len=tiny_config.max_seq_len)
        a = init_params(tiny_config, seed=3)
        b = init_params(bigger, seed=3)
        assert np.array_equal(a.backbone["emb.tok"].data, b.backbone["emb.tok"].data)
        assert np.array_equal(a.backbone["block00.attn.wq"].data,
                              b.backbone["block00.attn.wq"].data)

    def test_parameterization_validates_names_and_shapes(self, tiny_config, tiny_params):
        missing = dict(tiny_params.backbone)
        missing.pop("emb.tok")
        with pytest.raises(ShapeError):
            Parameterization(config=tiny_config, backbone=missing)
        wrong = {n: t.copy() for n, t in tiny_params.backbone.items()}
        wrong["emb.tok"] = Tensor(np.zeros((2, 2)))
        with pytest.raises(ShapeError):
            Parameterization(config=tiny_config, backbone=wrong)


class TestAttachHead:
    def test_backbone_copied_bit_exact(self, tiny_params):
        out = attach_head(tiny_params, HeadSpec("classifier", 3), seed=1)
        for n, t in tiny_params.backbone.items():
            assert np.array_equal(out.backbone[n].data, t.data)
            assert out.backbone[n] is not t  # fresh tensors, no aliasing

    def test_head_shapes(self, tiny_config, tiny_params):
        d = tiny_config.hidden_size
        cls = attach_head(tiny_params, HeadSpec("classifier", 4), seed=1)
        assert cls.head["head.w"].shape == (d, 4)
        assert np.all(cls.head["head.b"].data == 0.0)
        mlm = attach_head(tiny_params, HeadSpec("mlm"), seed=1)
        assert set(mlm.head) == {"head.bias"}
        assert mlm.head["head.bias"].shape == (tiny_config.vocab_size,)
        reg = attach_head(tiny_params, HeadSpec("regressor"), seed=1)
        assert reg.head["head.w"].shape == (d, 1)

    def test_head_seed_controls_weights(self, tiny_params):
        a = attach_head(tiny_params, HeadSpec("classifier", 2), seed=1)
        b = attach_head(tiny_params, HeadSpec("classifier", 2), seed=1)
        c = attach_head(tiny_params, HeadSpec("classifier", 2), seed=2)
        assert np.array_equal(a.head["head.w"].data, b.head["head.w"].data)
        assert not np.array_equal(a.head["head.w"].data, c.head["head.w"].data)


def manual_forward(params, head_spec, ids, pad_id=None):
    """Independent numpy re-implementation of the encoder forward pass."""
    cfg = params.config
    bb = {n: t.data.astype(np.float64) for n, t in params.backbone.items()}
    head = {n: t.data.astype(np.float64) for n, t in params.head.items()}
    B, T = ids.shape
    nh, hd = cfg.num_heads, cfg.head_dim

    def ln(x, gain, bias):
        mu = x.mean(-1, keepdims=True)
        var = ((x - mu) ** 2).mean(-1, keepdims=True)
        return (x - mu) / np.sqrt(var + 1e-12) * gain + bias

    def gelu_np(x):
        return 0.5 * x * (1.0 + np.tanh(math.sqrt(2 / math.pi) * (x + 0.044715 * x ** 3)))

    h = bb["emb.tok"][ids] + bb["emb.pos"][:T]
    h = ln(h, bb["emb.norm.gain"], bb["emb.norm.bias"])

    key_bias = np.zeros((B, T))
    if pad_id is not None:
        key_bias = np.where(ids == pad_id, -1e9, 0.0)

    width = max(2, len(str(max(cfg.num_blocks - 1, 0))))
    for i in range(cfg.num_blocks):
        p = f"block{i:0{width}d}"
        q = h @ bb[f"{p}.attn.wq"] + bb[f"{p}.attn.bq"]
        k = h @ bb[f"{p}.attn.wk"] + bb[f"{p}.attn.bk"]
        v = h @ bb[f"{p}.attn.wv"] + bb[f"{p}.attn.bv"]
        ctx = np.zeros_like(h)
        for b in range(B):
            for head_i in range(nh):
                sl = slice(head_i * hd, (head_i + 1) * hd)
                scores = q[b, :, sl] @ k[b, :, sl].T / math.sqrt(hd)
                scores = scores + key_bias[b][None, :]
                e = np.exp(scores - scores.max(-1, keepdims=True))
                attn = e / e.sum(-1, keepdims=True)
                ctx[b, :, sl] = attn @ v[b, :, sl]
        attn_out = ctx @ bb[f"{p}.attn.wo"] + bb[f"{p}.attn.bo"]
        h = ln(h + attn_out, bb[f"{p}.attn.norm.gain"], bb[f"{p}.attn.norm.bias"])
        inner = gelu_np(h @ bb[f"{p}.ffn.w1"] + bb[f"{p}.ffn.b1"])
        ffn_out = inner @ bb[f"{p}.ffn.w2"] + bb[f"{p}.ffn.b2"]
        h = ln(h + ffn_out, bb[f"{p}.ffn.norm.gain"], bb[f"{p}.ffn.norm.bias"])

    if head_spec.kind == "mlm":
        return h @ bb["emb.tok"].T + head["head.bias"]
    pooled = h[:, 0, :]
    out = pooled @ head["head.w"] + head["head.b"]
    return out[:, 0] if head_spec.kind == "regressor" else out


class TestForward:
    def _model(self, tiny_config, kind="classifier", n=3, seed=9):
        params = init_params(tiny_config, seed=seed)
        hs = HeadSpec(kind) if kind != "classifier" else HeadSpec(kind, n)
        return attach_head(params, hs, seed=seed + 1), hs

    def test_matches_manual_oracle_classifier(self, f64, tiny_config):
        params, hs = self._model(tiny_config)
        ids = np.array([[2, 7, 9, 11, 5], [2, 6, 6, 12, 8]])
        got = forward(params, hs, None, ids, pad_id=None).data
        want = manual_forward(params, hs, ids)
        assert got.shape == (2, 3)
        assert np.allclose(got, want, atol=1e-10, rtol=0)

    def test_matches_manual_oracle_two_blocks(self, f64):
        cfg = ModelConfig(num_blocks=2, hidden_size=8, num_heads=2, ffn_size=12,
                          vocab_size=20, max_seq_len=10)
        params = attach_head(init_params(cfg, seed=2), HeadSpec("mlm"), seed=3)
        ids = np.array([[2, 9, 14, 7], [2, 5, 5, 19]])
        got = forward(params, HeadSpec("mlm"), None, ids, pad_id=None).data
        want = manual_forward(params, HeadSpec("mlm"), ids)
        assert got.shape == (2, 4, 20)
        assert np.allclose(got, want, atol=1e-9, rtol=0)

    def test_matches_manual_oracle_regressor(self, f64, tiny_config):
        params, hs = self._model(tiny_config, kind="regressor")
        ids = np.array([[2, 8, 13]])
        got = forward(params, hs, None, ids, pad_id=None).data
        assert got.shape == (1,)
        assert np.allclose(got, manual_forward(params, hs, ids), atol=1e-10, rtol=0)

    def test_mlm_decoder_is_tied_to_token_embedding(self, f64, tiny_config):
        params, hs = self._model(tiny_config, kind="mlm")
        ids = np.array([[2, 7, 9]])
        base = forward(params, hs, None, ids, pad_id=None).data.copy()
        # bump one embedding entry; the matching vocab logit column must move
        params.backbone["emb.tok"].data[17, 3] += 0.25
        moved = forward(params, hs, None, ids, pad_id=None).data
        assert not np.allclose(base[..., 17], moved[..., 17])

    def test_padded_keys_do_not_influence_other_positions(self, f64, tiny_config):
        params, hs = self._model(tiny_config)
        short = np.array([[2, 7, 9, 11]])
        padded = np.array([[2, 7, 9, 11, 0, 0]])
        a = forward(params, hs, None, short, pad_id=0).data
        b = forward(params, hs, None, padded, pad_id=0).data
        assert np.allclose(a, b, atol=1e-9, rtol=0)

    def test_mask_equals_explicitly_zeroed_weights(self, f64, tiny_config):
        params, hs = self._model(tiny_config)
        rng_vals = rand_array((tiny_config.vocab_size, tiny_config.hidden_size), 40)
        mask = {n: (rand_array(t.data.shape, seed=50 + i) > 0).astype(np.uint8)
                for i, (n, t) in enumerate(params.backbone.items())
                if n in params.prunable}
        ids = np.array([[2, 7, 9, 11, 5]])
        masked_out = forward(params, hs, mask, ids, pad_id=None).data
        zeroed = params.clone()
        for n, m in mask.items():
            zeroed.backbone[n].data = zeroed.backbone[n].data * m
        plain_out = forward(zeroed, hs, None, ids, pad_id=None).data
        assert np.allclose(masked_out, plain_out, atol=0, rtol=0)

    def test_pruned_weights_receive_zero_gradient(self, f64, tiny_config):
        params, hs = self._model(tiny_config)
        mask = {"emb.tok": np.ones((tiny_config.vocab_size, tiny_config.hidden_size),
                                   dtype=np.uint8)}
        mask["emb.tok"][7, :] = 0
        ids = np.array([[2, 7, 9, 11]])
        with Tape():
            out = forward(params, hs, mask, ids, pad_id=None)
            flat = reshape(out, (1, out.size))
            loss = reshape(matmul(flat, Tensor(np.ones((out.size, 1)))), ())
            backward(loss)
        g = params.backbone["emb.tok"].grad
        assert g is not None
        assert np.all(g[7, :] == 0.0)
        assert np.any(g != 0.0)

    def test_1d_ids_promoted_to_batch(self, tiny_config):
        params, hs = self._model(tiny_config)
        a = forward(params, hs, None, np.array([2, 7, 9]), pad_id=None).data
        b = forward(params, hs, None, np.array([[2, 7, 9]]), pad_id=None).data
        assert np.array_equal(a, b)

    def test_validation_errors(self, tiny_config):
        params, hs = self._model(tiny_config)
        with pytest.raises(DataError):
            forward(params, hs, None, np.zeros((1, 1, 3), dtype=np.int64))
        with pytest.raises(DataError):
            forward(params, hs, None, np.full((1, tiny_config.max_seq_len + 1), 2))
        with pytest.raises(ConfigError):
            forward(params, HeadSpec("classifier", 5), None, np.array([[2, 7]]))
        bad_mask = {"emb.tok": np.ones((2, 2), dtype=np.uint8)}
        with pytest.raises(ConfigError):
            forward(params, hs, bad_mask, np.array([[2, 7]]))
