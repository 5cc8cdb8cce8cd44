"""Shared fixtures: precision control, tiny models, and a micro corpus."""

import numpy as np
import pytest

from ticketlab.numerics import Rng, set_dtype, use_dtype
from ticketlab.tasks import GeneratorSpec, derive_task, gen_corpus
from ticketlab.transformer import HeadSpec, ModelConfig, attach_head, init_params


@pytest.fixture(autouse=True)
def _default_precision():
    # Each test starts from the run default; tests opt into f64 explicitly.
    set_dtype("f32")
    yield
    set_dtype("f32")


@pytest.fixture
def f64():
    with use_dtype("f64"):
        yield


@pytest.fixture
def tiny_config():
    return ModelConfig(num_blocks=1, hidden_size=8, num_heads=2, ffn_size=16,
                       vocab_size=24, max_seq_len=16)


@pytest.fixture
def tiny_params(tiny_config):
    return init_params(tiny_config, seed=7)


@pytest.fixture
def micro_spec():
    return GeneratorSpec(num_states=4, vocab_size=24, min_len=6, max_len=10,
                         num_chains=2, eval_fraction=0.25, seed=11)


@pytest.fixture
def micro_corpus(micro_spec):
    return gen_corpus(micro_spec, 80)


@pytest.fixture
def micro_mlm(micro_corpus):
    return derive_task(micro_corpus, "mlm", "mlm", seed=3)


@pytest.fixture
def micro_classifier(micro_corpus):
    return derive_task(micro_corpus, "single-class", "dominant-hidden-state", seed=3)


def rand_array(shape, seed=0, scale=1.0):
    """Deterministic float64 array for oracle comparisons."""
    rng = Rng.from_seed(seed, "test/data")
    n = int(np.prod(shape))
    return (rng.normal(n) * scale).reshape(shape)
