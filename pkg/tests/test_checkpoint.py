"""Checkpoint file format: bit-exact round trips and corruption reporting."""

import numpy as np
import pytest

from ticketlab.errors import LoadError
from ticketlab.numerics import Rng, use_dtype
from ticketlab.training import (
    Checkpoint,
    OptimizerState,
    load_checkpoint,
    save_checkpoint,
)
from ticketlab.transformer import HeadSpec, attach_head, init_params


def sample_checkpoint(tiny_config, step=17, seed=4):
    params = attach_head(init_params(tiny_config, seed=seed), HeadSpec("classifier", 3),
                         seed=seed + 1)
    opt = OptimizerState.zeros(params.all_tensors())
    opt.step = step
    for n in opt.m:
        opt.m[n] += 0.25
        opt.v[n] += 0.5
    rngs = {"data": Rng.from_seed(seed, "data"), "mlm": Rng.from_seed(seed, "mlm")}
    rngs["data"].next_u64(9)
    return Checkpoint.capture(params, opt, rngs, step=step, fingerprint=bytes(range(32)))


class TestRoundTrip:
    def test_bit_exact(self, tiny_config, tmp_path):
        ckpt = sample_checkpoint(tiny_config)
        p = tmp_path / "run.ckpt"
        save_checkpoint(p, ckpt)
        loaded = load_checkpoint(p)
        assert loaded.step == ckpt.step
        assert loaded.fingerprint == ckpt.fingerprint
        assert set(loaded.tensors) == set(ckpt.tensors)
        for n, a in ckpt.tensors.items():
            b = loaded.tensors[n]
            assert a.dtype == b.dtype and a.shape == b.shape
            assert a.tobytes() == b.tobytes(), n
        assert loaded.rng_states == ckpt.rng_states

    def test_same_bytes_on_rewrite(self, tiny_config, tmp_path):
        ckpt = sample_checkpoint(tiny_config)
        save_checkpoint(tmp_path / "a.ckpt", ckpt)
        save_checkpoint(tmp_path / "b.ckpt", ckpt)
        assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()

    def test_f64_tensors_roundtrip(self, tiny_config, tmp_path):
        with use_dtype("f64"):
            ckpt = sample_checkpoint(tiny_config)
            save_checkpoint(tmp_path / "d.ckpt", ckpt)
            loaded = load_checkpoint(tmp_path / "d.ckpt")
        name = next(iter(loaded.tensors))
        assert loaded.tensors[name].dtype == np.float64

    def test_restore_params_and_optimizer(self, tiny_config, tmp_path):
        ckpt = sample_checkpoint(tiny_config)
        save_checkpoint(tmp_path / "r.ckpt", ckpt)
        loaded = load_checkpoint(tmp_path / "r.ckpt")
        params = loaded.restore_params(tiny_config, HeadSpec("classifier", 3))
        assert np.array_equal(params.backbone["emb.tok"].data,
                              ckpt.tensors["theta/emb.tok"])
        assert np.array_equal(params.head["head.w"].data, ckpt.tensors["gamma/head.w"])
        opt = loaded.restore_optimizer()
        assert opt.step == ckpt.step
        assert np.array_equal(opt.m["emb.tok"], ckpt.tensors["opt.m/emb.tok"])

    def test_restore_rng_resumes_stream(self, tiny_config, tmp_path):
        ckpt = sample_checkpoint(tiny_config, seed=6)
        save_checkpoint(tmp_path / "g.ckpt", ckpt)
        loaded = load_checkpoint(tmp_path / "g.ckpt")
        resumed = loaded.restore_rng("data")
        fresh = Rng.from_seed(6, "data")
        fresh.next_u64(9)
        assert np.array_equal(resumed.next_u64(5), fresh.next_u64(5))

    def test_fingerprint_check(self, tiny_config, tmp_path):
        ckpt = sample_checkpoint(tiny_config)
        p = tmp_path / "f.ckpt"
        save_checkpoint(p, ckpt)
        load_checkpoint(p, expect_fingerprint=bytes(range(32)))
        with pytest.raises(LoadError):
            load_checkpoint(p, expect_fingerprint=bytes(32))


class TestCorruption:
    def _saved(self, tiny_config, tmp_path):
        p = tmp_path / "c.ckpt"
        save_checkpoint(p, sample_checkpoint(tiny_config))
        return p

    def test_bad_magic_names_offset_zero(self, tiny_config, tmp_path):
        p = self._saved(tiny_config, tmp_path)
        raw = bytearray(p.read_bytes())
        raw[:4] = b"WHAT"
        p.write_bytes(bytes(raw))
        with pytest.raises(LoadError, match="offset 0"):
            load_checkpoint(p)

    def test_unsupported_version(self, tiny_config, tmp_path):
        p = self._saved(tiny_config, tmp_path)
        raw = bytearray(p.read_bytes())
        raw[4] = 99
        p.write_bytes(bytes(raw))
        with pytest.raises(LoadError, match="version"):
            load_checkpoint(p)

    def test_truncation_reports_offset_and_field(self, tiny_config, tmp_path):
        p = self._saved(tiny_config, tmp_path)
        raw = p.read_bytes()
        p.write_bytes(raw[:100])
        with pytest.raises(LoadError, match="truncated"):
            load_checkpoint(p)
        with pytest.raises(LoadError, match="byte offset"):
            load_checkpoint(p)

    def test_trailing_bytes_rejected(self, tiny_config, tmp_path):
        p = self._saved(tiny_config, tmp_path)
        p.write_bytes(p.read_bytes() + b"junk")
        with pytest.raises(LoadError, match="trailing"):
            load_checkpoint(p)

    def test_unknown_dtype_tag(self, tiny_config, tmp_path):
        p = self._saved(tiny_config, tmp_path)
        raw = bytearray(p.read_bytes())
        # first tensor record: magic(4) version(2) fp(32) step+count(12)
        off = 50
        (nlen,) = np.frombuffer(raw[off:off + 2], dtype="<u2")
        off += 2 + int(nlen)
        (rank,) = np.frombuffer(raw[off:off + 4], dtype="<u4")
        off += 4 + 4 * int(rank)
        raw[off] = 7  # dtype tag
        p.write_bytes(bytes(raw))
        with pytest.raises(LoadError, match="dtype tag"):
            load_checkpoint(p)

    def test_capture_rejects_wrong_fingerprint_length(self, tiny_config):
        params = init_params(tiny_config, seed=1)
        with pytest.raises(ValueError):
            Checkpoint.capture(params, None, {}, step=0, fingerprint=b"short")
