"""Synthetic corpus generation from hidden Markov chains.

A GeneratorSpec describes a small family of HMMs over a shared
vocabulary: ``num_chains`` chains, each with its own Dirichlet-sampled
transition matrix (K x K) and emission matrix (K x regular-vocab).
Sequences start in the chain's stationary distribution, so token
statistics are stationary from the first position.

Emission concentration controls difficulty: small alpha gives peaked
per-state token distributions (hidden states easy to infer from
tokens), large alpha approaches uniform emissions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError, DataError
from ..numerics import Rng
from .dataset import Dataset, Example
from .vocab import CLS, NUM_RESERVED, Vocab


@dataclass(frozen=True)
class GeneratorSpec:
    num_states: int = 8
    vocab_size: int = 64
    min_len: int = 16
    max_len: int = 24
    transition_alpha: float = 1.0
    emission_alpha: float = 0.12
    num_chains: int = 2
    eval_fraction: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.num_states < 1:
            raise ConfigError("num_states must be >= 1")
        if self.vocab_size <= NUM_RESERVED + 1:
            raise ConfigError(f"vocab_size must exceed {NUM_RESERVED + 1}")
        if not (1 <= self.min_len <= self.max_len):
            raise ConfigError("need 1 <= min_len <= max_len")
        if self.transition_alpha <= 0 or self.emission_alpha <= 0:
            raise ConfigError("Dirichlet concentrations must be positive")
        if self.num_chains < 1:
            raise ConfigError("num_chains must be >= 1")
        if not (0.0 <= self.eval_fraction < 1.0):
            raise ConfigError("eval_fraction must be in [0, 1)")

    def to_dict(self) -> dict:
        return {
            "num_states": self.num_states,
            "vocab_size": self.vocab_size,
            "min_len": self.min_len,
            "max_len": self.max_len,
            "transition_alpha": self.transition_alpha,
            "emission_alpha": self.emission_alpha,
            "num_chains": self.num_chains,
            "eval_fraction": self.eval_fraction,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        return cls(**d)


@dataclass
class Chain:
    transitions: np.ndarray  # (K, K)
    emissions: np.ndarray    # (K, regular vocab)
    stationary: np.ndarray   # (K,)


def _stationary(transitions: np.ndarray) -> np.ndarray:
    """Solve pi T = pi, sum(pi) = 1 by least squares."""
    k = transitions.shape[0]
    a = np.vstack([transitions.T - np.eye(k), np.ones((1, k))])
    b = np.zeros(k + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(a, b, rcond=None)
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


def build_chains(spec: GeneratorSpec) -> list[Chain]:
    chains = []
    regular = spec.vocab_size - NUM_RESERVED
    for c in range(spec.num_chains):
        trng = Rng.from_seed(spec.seed, f"hmm/chain{c}/transitions")
        erng = Rng.from_seed(spec.seed, f"hmm/chain{c}/emissions")
        T = np.stack([trng.dirichlet(spec.transition_alpha, spec.num_states)
                      for _ in range(spec.num_states)])
        E = np.stack([erng.dirichlet(spec.emission_alpha, regular)
                      for _ in range(spec.num_states)])
        if not (np.allclose(T.sum(axis=1), 1.0, atol=1e-9)
                and np.allclose(E.sum(axis=1), 1.0, atol=1e-9)):
            raise DataError("chain rows failed to normalize within 1e-9")
        chains.append(Chain(transitions=T, emissions=E, stationary=_stationary(T)))
    return chains


def _sample_categorical_rows(cum: np.ndarray, rows: np.ndarray, u: np.ndarray) -> np.ndarray:
    """For each i, sample from the distribution whose cdf is cum[rows[i]]."""
    c = cum[rows]
    idx = (u[:, None] >= c).sum(axis=1)
    return np.minimum(idx, cum.shape[1] - 1)


def gen_corpus(spec: GeneratorSpec, n_sequences: int) -> Dataset:
    """Sample a corpus; retains hidden paths and chain ids in memory.

    Sequences alternate over chains (i mod num_chains), lengths are
    uniform over [min_len, max_len], the trailing eval_fraction of
    indices form the eval split.
    """
    if n_sequences < 1:
        raise DataError("n_sequences must be >= 1")
    chains = build_chains(spec)
    vocab = Vocab.synthetic(spec.vocab_size)
    lrng = Rng.from_seed(spec.seed, "hmm/lengths")
    span = spec.max_len - spec.min_len + 1
    lengths = spec.min_len + lrng.integers(span, n_sequences)
    chain_ids = np.arange(n_sequences) % spec.num_chains

    # sample all sequences of one chain in lockstep to max_len, then trim
    states = np.zeros((n_sequences, spec.max_len), dtype=np.int64)
    tokens = np.zeros((n_sequences, spec.max_len), dtype=np.int64)
    for c, chain in enumerate(chains):
        mine = np.nonzero(chain_ids == c)[0]
        if mine.size == 0:
            continue
        rng = Rng.from_seed(spec.seed, f"hmm/sample/chain{c}")
        cum_t = np.cumsum(chain.transitions, axis=1)
        cum_e = np.cumsum(chain.emissions, axis=1)
        cum_pi = np.cumsum(chain.stationary)[None, :]
        s = _sample_categorical_rows(cum_pi, np.zeros(mine.size, dtype=np.int64),
                                     rng.uniform(mine.size))
        for t in range(spec.max_len):
            states[mine, t] = s
            tokens[mine, t] = _sample_categorical_rows(cum_e, s, rng.uniform(mine.size))
            s = _sample_categorical_rows(cum_t, s, rng.uniform(mine.size))

    n_eval = int(round(spec.eval_fraction * n_sequences))
    examples = []
    for i in range(n_sequences):
        ln = int(lengths[i])
        ids = np.concatenate([[CLS], tokens[i, :ln] + NUM_RESERVED]).astype(np.int64)
        examples.append(Example(
            ids=ids,
            split="eval" if i >= n_sequences - n_eval else "train",
            chain=int(chain_ids[i]),
            hidden=states[i, :ln].copy(),
        ))
    ds = Dataset(vocab, examples, meta={"generator": spec.to_dict()})
    ds.validate()
    return ds
