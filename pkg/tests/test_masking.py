"""Mask algebra: pruning oracles, baselines, reinit, and the file format."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ticketlab.errors import LoadError, ShapeError
from ticketlab.masking import (
    Mask,
    apply,
    global_magnitude_prune,
    is_subset,
    load_mask,
    overlap,
    prune_to_sparsity,
    random_mask,
    random_reinit,
    round_half_away,
    save_mask,
    shuffle_reinit,
    sparsity,
)
from ticketlab.transformer import init_params


def brute_force_prune(params, mask, count):
    """Oracle: remove the ``count`` smallest surviving |w| with
    (name, flat index) tie-breaking, via one python sort."""
    entries = []
    for name in sorted(mask.arrays):
        w = params.backbone[name].data.ravel()
        m = mask.arrays[name].ravel()
        for i in range(w.size):
            if m[i]:
                entries.append((abs(float(w[i])), name, i))
    entries.sort()
    out = mask.copy()
    for _, name, i in entries[:count]:
        flat = out.arrays[name].ravel()
        flat[i] = 0
        out.arrays[name] = flat.reshape(out.arrays[name].shape)
    return out


def masks_equal(a, b):
    return all(np.array_equal(a.arrays[n], b.arrays[n]) for n in a.arrays)


class TestRounding:
    def test_half_away_from_zero(self):
        assert round_half_away(0.5) == 1
        assert round_half_away(1.5) == 2
        assert round_half_away(2.5) == 3
        assert round_half_away(2.4) == 2
        assert round_half_away(0.0) == 0


class TestMaskBasics:
    def test_ones_covers_prunable_set(self, tiny_config):
        m = Mask.ones(tiny_config)
        assert m.sparsity() == 0.0
        assert m.surviving == m.total
        assert set(m.arrays) == set(init_params(tiny_config, 0).prunable)

    def test_rejects_missing_or_extra_tensors(self, tiny_config):
        m = Mask.ones(tiny_config)
        arrays = dict(m.arrays)
        arrays.pop("emb.tok")
        with pytest.raises(ShapeError):
            Mask(tiny_config, arrays)
        arrays = dict(m.arrays)
        arrays["made.up"] = np.ones((2, 2), dtype=np.uint8)
        with pytest.raises(ShapeError):
            Mask(tiny_config, arrays)

    def test_rejects_non_binary_values(self, tiny_config):
        m = Mask.ones(tiny_config)
        m.arrays["emb.tok"][0, 0] = 1
        arrays = {n: a.copy() for n, a in m.arrays.items()}
        arrays["emb.tok"][0, 0] = 2
        with pytest.raises(ShapeError):
            Mask(tiny_config, arrays)

    def test_counts(self, tiny_config):
        m = Mask.ones(tiny_config)
        m.arrays["emb.tok"][:3, :] = 0
        zeroed = 3 * tiny_config.hidden_size
        assert m.pruned == zeroed
        assert m.surviving == m.total - zeroed
        assert sparsity(m) == zeroed / m.total
        assert m.per_tensor_pruned()["emb.tok"] == zeroed


class TestMagnitudePruning:
    def test_matches_brute_force_oracle(self, tiny_config):
        params = init_params(tiny_config, seed=3)
        mask = Mask.ones(tiny_config)
        got = global_magnitude_prune(params, mask, 0.2)
        count = round_half_away(0.2 * mask.total)
        want = brute_force_prune(params, mask, count)
        assert got.pruned == count
        assert masks_equal(got, want)

    def test_second_round_prunes_fraction_of_remaining(self, tiny_config):
        params = init_params(tiny_config, seed=3)
        m1 = global_magnitude_prune(params, Mask.ones(tiny_config), 0.2)
        m2 = global_magnitude_prune(params, m1, 0.2)
        assert m2.pruned - m1.pruned == round_half_away(0.2 * m1.surviving)
        want = brute_force_prune(params, m1, round_half_away(0.2 * m1.surviving))
        assert masks_equal(m2, want)

    def test_rounds_nest(self, tiny_config):
        params = init_params(tiny_config, seed=5)
        mask = Mask.ones(tiny_config)
        for _ in range(6):
            nxt = global_magnitude_prune(params, mask, 0.25)
            assert is_subset(nxt, mask)
            mask = nxt

    def test_tie_breaking_is_deterministic(self, tiny_config):
        params = init_params(tiny_config, seed=1)
        # force massive magnitude ties
        for n in params.prunable:
            params.backbone[n].data = np.round(params.backbone[n].data, 2)
        a = global_magnitude_prune(params, Mask.ones(tiny_config), 0.3)
        b = global_magnitude_prune(params, Mask.ones(tiny_config), 0.3)
        assert masks_equal(a, b)
        count = round_half_away(0.3 * a.total)
        want = brute_force_prune(params, Mask.ones(tiny_config), count)
        assert masks_equal(a, want)

    def test_round_counter_in_meta(self, tiny_config):
        params = init_params(tiny_config, seed=1)
        m1 = global_magnitude_prune(params, Mask.ones(tiny_config), 0.1)
        m2 = global_magnitude_prune(params, m1, 0.1)
        assert m1.meta["round"] == 1
        assert m2.meta["round"] == 2

    def test_fraction_bounds(self, tiny_config):
        params = init_params(tiny_config, seed=1)
        for bad in (0.0, 1.0, -0.1):
            with pytest.raises(ValueError):
                global_magnitude_prune(params, Mask.ones(tiny_config), bad)

    def test_config_mismatch(self, tiny_config, micro_spec):
        from ticketlab.transformer import ModelConfig
        other = ModelConfig(num_blocks=2, hidden_size=8, num_heads=2,
                            vocab_size=24, max_seq_len=16)
        params = init_params(other, seed=1)
        with pytest.raises(ShapeError):
            global_magnitude_prune(params, Mask.ones(tiny_config), 0.1)


class TestPruneToSparsity:
    def test_exact_pruned_count(self, tiny_config):
        import math
        params = init_params(tiny_config, seed=2)
        mask = Mask.ones(tiny_config)
        got = prune_to_sparsity(params, mask, 0.37)
        assert got.pruned == math.ceil(0.37 * mask.total)

    def test_trims_from_an_already_pruned_mask(self, tiny_config):
        import math
        params = init_params(tiny_config, seed=2)
        part = global_magnitude_prune(params, Mask.ones(tiny_config), 0.3)
        got = prune_to_sparsity(params, part, 0.5)
        assert got.pruned == math.ceil(0.5 * part.total)
        assert is_subset(got, part)
        extra = got.pruned - part.pruned
        assert masks_equal(got, brute_force_prune(params, part, extra))

    def test_noop_when_already_at_target(self, tiny_config):
        params = init_params(tiny_config, seed=2)
        part = global_magnitude_prune(params, Mask.ones(tiny_config), 0.5)
        again = prune_to_sparsity(params, part, part.sparsity())
        assert masks_equal(again, part)

    def test_overshoot_rejected(self, tiny_config):
        params = init_params(tiny_config, seed=2)
        part = global_magnitude_prune(params, Mask.ones(tiny_config), 0.5)
        with pytest.raises(ValueError):
            prune_to_sparsity(params, part, 0.3)


class TestRandomMask:
    def test_global_scheme_count_and_determinism(self, tiny_config):
        m = random_mask(tiny_config, 0.6, seed=9)
        assert m.pruned == round_half_away(0.6 * m.total)
        assert masks_equal(m, random_mask(tiny_config, 0.6, seed=9))
        assert not masks_equal(m, random_mask(tiny_config, 0.6, seed=10))

    def test_layerwise_matched_copies_per_tensor_counts(self, tiny_config):
        params = init_params(tiny_config, seed=4)
        ref = global_magnitude_prune(params, Mask.ones(tiny_config), 0.4)
        m = random_mask(tiny_config, 0.4, seed=9, scheme="layerwise-matched",
                        reference=ref)
        assert m.per_tensor_pruned() == ref.per_tensor_pruned()
        assert not masks_equal(m, ref)

    def test_layerwise_requires_reference(self, tiny_config):
        with pytest.raises(ValueError):
            random_mask(tiny_config, 0.4, seed=1, scheme="layerwise-matched")

    def test_validation(self, tiny_config):
        with pytest.raises(ValueError):
            random_mask(tiny_config, 1.0, seed=1)
        with pytest.raises(ValueError):
            random_mask(tiny_config, 0.5, seed=1, scheme="stripes")


class TestOverlapAndSubset:
    def test_overlap_brute_force(self, tiny_config):
        a = random_mask(tiny_config, 0.5, seed=1)
        b = random_mask(tiny_config, 0.5, seed=2)
        inter = union = 0
        for n in a.arrays:
            za = a.arrays[n].ravel() == 0
            zb = b.arrays[n].ravel() == 0
            for i in range(za.size):
                inter += int(za[i] and zb[i])
                union += int(za[i] or zb[i])
        assert overlap(a, b) == pytest.approx(inter / union, abs=0)

    def test_overlap_extremes(self, tiny_config):
        dense = Mask.ones(tiny_config)
        assert overlap(dense, dense) == 1.0  # empty pruned sets agree
        m = random_mask(tiny_config, 0.5, seed=3)
        assert overlap(m, m) == 1.0
        assert 0.0 <= overlap(m, random_mask(tiny_config, 0.5, seed=4)) < 1.0

    def test_subset_relation(self, tiny_config):
        params = init_params(tiny_config, seed=6)
        m1 = global_magnitude_prune(params, Mask.ones(tiny_config), 0.3)
        m2 = global_magnitude_prune(params, m1, 0.3)
        assert is_subset(m2, m1)
        assert not is_subset(m1, m2)
        assert is_subset(m1, Mask.ones(tiny_config))

    def test_incomparable_masks_rejected(self, tiny_config):
        from ticketlab.transformer import ModelConfig
        other = ModelConfig(num_blocks=2, hidden_size=8, num_heads=2,
                            vocab_size=24, max_seq_len=16)
        with pytest.raises(ShapeError):
            overlap(Mask.ones(tiny_config), Mask.ones(other))


class TestApply:
    def test_zeros_exactly_the_pruned_positions(self, tiny_config):
        params = init_params(tiny_config, seed=7)
        m = random_mask(tiny_config, 0.5, seed=7)
        out = apply(m, params)
        for n, a in m.arrays.items():
            before = params.backbone[n].data
            after = out.backbone[n].data
            assert np.all(after[a == 0] == 0.0)
            assert np.array_equal(after[a == 1], before[a == 1])
        # original untouched
        assert not np.all(params.backbone["emb.tok"].data[m["emb.tok"] == 0] == 0)


class TestReinit:
    def test_random_reinit_matches_fresh_init(self, tiny_config):
        a = random_reinit(tiny_config, seed=12)
        b = init_params(tiny_config, seed=12)
        for n in a.backbone:
            assert np.array_equal(a.backbone[n].data, b.backbone[n].data)

    def test_shuffle_preserves_multiset_per_tensor(self, tiny_config):
        params = init_params(tiny_config, seed=8)
        out = shuffle_reinit(params, seed=5)
        for n in params.prunable:
            a = np.sort(params.backbone[n].data, axis=None)
            b = np.sort(out.backbone[n].data, axis=None)
            assert np.array_equal(a, b)
            assert not np.array_equal(params.backbone[n].data, out.backbone[n].data)

    def test_shuffle_leaves_non_prunable_untouched(self, tiny_config):
        params = init_params(tiny_config, seed=8)
        out = shuffle_reinit(params, seed=5)
        prunable = set(params.prunable)
        for n, t in params.backbone.items():
            if n not in prunable:
                assert np.array_equal(out.backbone[n].data, t.data)

    def test_shuffle_is_seeded(self, tiny_config):
        params = init_params(tiny_config, seed=8)
        a = shuffle_reinit(params, seed=5)
        b = shuffle_reinit(params, seed=5)
        c = shuffle_reinit(params, seed=6)
        for n in params.prunable:
            assert np.array_equal(a.backbone[n].data, b.backbone[n].data)
        assert any(not np.array_equal(a.backbone[n].data, c.backbone[n].data)
                   for n in params.prunable)


class TestMaskFile:
    def test_roundtrip_bit_exact(self, tiny_config, tmp_path):
        params = init_params(tiny_config, seed=9)
        m = global_magnitude_prune(params, Mask.ones(tiny_config), 0.45)
        m.meta.update(op="imp", task="t", seed=1)
        path = tmp_path / "m.mask"
        save_mask(path, m)
        loaded = load_mask(path, tiny_config)
        assert masks_equal(loaded, m)
        assert loaded.meta["op"] == "imp"
        assert (tmp_path / "m.mask.json").exists()

    def test_same_bytes_for_same_mask(self, tiny_config, tmp_path):
        m = random_mask(tiny_config, 0.3, seed=2)
        save_mask(tmp_path / "a.mask", m)
        save_mask(tmp_path / "b.mask", m)
        assert (tmp_path / "a.mask").read_bytes() == (tmp_path / "b.mask").read_bytes()

    def test_bad_magic_rejected(self, tiny_config, tmp_path):
        p = tmp_path / "bad.mask"
        p.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(LoadError):
            load_mask(p, tiny_config)

    def test_truncation_detected(self, tiny_config, tmp_path):
        m = random_mask(tiny_config, 0.3, seed=2)
        p = tmp_path / "m.mask"
        save_mask(p, m)
        raw = p.read_bytes()
        p.write_bytes(raw[: len(raw) // 2])
        with pytest.raises(LoadError):
            load_mask(p, tiny_config)

    def test_trailing_garbage_detected(self, tiny_config, tmp_path):
        m = random_mask(tiny_config, 0.3, seed=2)
        p = tmp_path / "m.mask"
        save_mask(p, m)
        p.write_bytes(p.read_bytes() + b"\x00\x01")
        with pytest.raises(LoadError):
            load_mask(p, tiny_config)

    def test_flipped_bit_changes_mask_not_crash(self, tiny_config, tmp_path):
        # payload bits are raw data, not checksummed; a flip alters counts
        m = random_mask(tiny_config, 0.3, seed=2)
        p = tmp_path / "m.mask"
        save_mask(p, m)
        raw = bytearray(p.read_bytes())
        raw[-1] ^= 0x01
        p.write_bytes(bytes(raw))
        loaded = load_mask(p, tiny_config)
        assert abs(loaded.pruned - m.pruned) == 1

    def test_missing_sidecar_loads_with_empty_meta(self, tiny_config, tmp_path):
        m = random_mask(tiny_config, 0.3, seed=2)
        p = tmp_path / "m.mask"
        save_mask(p, m)
        (tmp_path / "m.mask.json").unlink()
        loaded = load_mask(p, tiny_config)
        assert masks_equal(loaded, m)
        assert loaded.meta == {}


from ticketlab.transformer import ModelConfig

PROP_CONFIG = ModelConfig(num_blocks=1, hidden_size=8, num_heads=2, ffn_size=16,
                          vocab_size=24, max_seq_len=16)


@settings(max_examples=20, deadline=None)
@given(s=st.floats(0.05, 0.9), seed=st.integers(0, 10_000))
def test_random_mask_sparsity_property(s, seed):
    m = random_mask(PROP_CONFIG, s, seed)
    assert m.pruned == round_half_away(s * m.total)


@settings(max_examples=15, deadline=None)
@given(f=st.floats(0.05, 0.5), seed=st.integers(0, 1000))
def test_magnitude_prune_nesting_property(f, seed):
    params = init_params(PROP_CONFIG, seed=seed)
    m1 = global_magnitude_prune(params, Mask.ones(PROP_CONFIG), f)
    m2 = global_magnitude_prune(params, m1, f)
    assert is_subset(m2, m1)
    assert m1.pruned == round_half_away(f * m1.total)
