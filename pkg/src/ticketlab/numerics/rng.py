"""Deterministic counter-based random number generation.

One generator family is used everywhere: a keyed SplitMix64 counter
sequence. Output ``i`` of a stream is ``mix64(key + (i+1) * GAMMA)``
where ``mix64`` is the SplitMix64 finalizer and GAMMA the golden-ratio
increment. Because outputs are a pure function of (key, counter), blocks
of any size can be generated with vectorized uint64 arithmetic, and the
full stream state is two 64-bit words, which makes checkpointing and
bit-exact resumption trivial.

Independent substreams are derived as ``key = sha256(master_seed '/'
label)[:8]``, so consumers never share or race a stream. Reproducibility
is bit-exact for a fixed platform and package version; cross-platform
identity of 64-bit streams holds on any IEEE-754 platform, 32-bit
results are produced by rounding the 64-bit draws.
"""

from __future__ import annotations

import hashlib
import struct

import numpy as np

GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB
_U64 = np.uint64
# 2**-53, spacing of doubles in [1, 2)
_INV53 = 1.0 / (1 << 53)

ALGORITHM = "splitmix64-counter"


def derive_key(master_seed: int, label: str) -> int:
    """Hash (seed, label) into a 64-bit stream key."""
    h = hashlib.sha256(f"{int(master_seed)}/{label}".encode("utf-8")).digest()
    return struct.unpack("<Q", h[:8])[0]


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> _U64(30))) * _U64(_M1)
    z = (z ^ (z >> _U64(27))) * _U64(_M2)
    return z ^ (z >> _U64(31))


class Rng:
    """One substream: ``key`` fixed at creation, ``counter`` advances per draw."""

    __slots__ = ("key", "counter")

    def __init__(self, key: int, counter: int = 0):
        self.key = int(key) & 0xFFFFFFFFFFFFFFFF
        self.counter = int(counter)

    @classmethod
    def from_seed(cls, master_seed: int, label: str) -> "Rng":
        return cls(derive_key(master_seed, label))

    # -- state -----------------------------------------------------------

    def state_blob(self) -> bytes:
        """32-byte serialized state: key, counter, two reserved words."""
        return struct.pack("<4Q", self.key, self.counter & 0xFFFFFFFFFFFFFFFF, 0, 0)

    @classmethod
    def from_blob(cls, blob: bytes) -> "Rng":
        if len(blob) != 32:
            raise ValueError(f"rng state blob must be 32 bytes, got {len(blob)}")
        key, counter, _, _ = struct.unpack("<4Q", blob)
        return cls(key, counter)

    def clone(self) -> "Rng":
        return Rng(self.key, self.counter)

    # -- raw draws --------------------------------------------------------

    def next_u64(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + 1 + n, dtype=np.uint64)
        self.counter += n
        return _mix(_U64(self.key) + idx * _U64(GAMMA))

    # -- distributions (all computed in float64, castable by callers) -----

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        """n doubles in [low, high)."""
        u = (self.next_u64(n) >> _U64(11)).astype(np.float64) * _INV53
        return low + (high - low) * u

    def _open01(self, n: int) -> np.ndarray:
        # (0, 1]: shifts into 53-bit range then offsets by one ulp
        return ((self.next_u64(n) >> _U64(11)).astype(np.float64) + 1.0) * _INV53

    def normal(self, n: int, mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        """n Box-Muller gaussians."""
        m = (n + 1) // 2
        u1 = self._open01(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        theta = (2.0 * np.pi) * u2
        z = np.concatenate([r * np.cos(theta), r * np.sin(theta)])[:n]
        return mean + std * z

    def truncated_normal(self, n: int, mean: float = 0.0, std: float = 1.0,
                         clip: float = 2.0) -> np.ndarray:
        """Gaussian draws with rejected redraws outside ``clip`` standard units."""
        z = self.normal(n)
        bad = np.abs(z) > clip
        while bad.any():
            z[bad] = self.normal(int(bad.sum()))
            bad = np.abs(z) > clip
        return mean + std * z

    def permutation(self, n: int) -> np.ndarray:
        """Uniform random permutation of range(n) (argsort of random keys)."""
        return np.argsort(self.next_u64(n), kind="stable").astype(np.int64)

    def integers(self, n: int, size: int) -> np.ndarray:
        """size draws from range(n) with replacement.

        Uses u64 mod n; the bias is of order n / 2**64 and irrelevant at
        laboratory scale.
        """
        if n <= 0:
            raise ValueError("integers() requires n >= 1")
        return (self.next_u64(size) % _U64(n)).astype(np.int64)

    def choice(self, n: int, size: int, p: np.ndarray | None = None) -> np.ndarray:
        """Sample ``size`` indices from range(n).

        Without ``p``: uniform without replacement (requires size <= n).
        With ``p``: weighted with replacement via inverse-CDF lookup.
        """
        if p is None:
            if size > n:
                raise ValueError(f"cannot draw {size} of {n} without replacement")
            return self.permutation(n)[:size]
        p = np.asarray(p, dtype=np.float64)
        if p.shape != (n,):
            raise ValueError(f"weights shape {p.shape} does not match n={n}")
        if (p < 0).any() or p.sum() <= 0:
            raise ValueError("weights must be nonnegative with positive sum")
        cdf = np.cumsum(p / p.sum())
        cdf[-1] = 1.0
        u = self.uniform(size)
        return np.searchsorted(cdf, u, side="right").astype(np.int64)

    def gamma(self, alpha: float, n: int) -> np.ndarray:
        """Marsaglia-Tsang gamma(alpha, 1) draws; alpha < 1 via the boost trick."""
        if alpha <= 0:
            raise ValueError("gamma requires alpha > 0")
        if alpha < 1.0:
            # gamma(a) = gamma(a+1) * U^(1/a)
            g = self.gamma(alpha + 1.0, n)
            u = self._open01(n)
            return g * u ** (1.0 / alpha)
        d = alpha - 1.0 / 3.0
        c = 1.0 / np.sqrt(9.0 * d)
        out = np.empty(n, dtype=np.float64)
        todo = np.arange(n)
        while todo.size:
            x = self.normal(todo.size)
            v = (1.0 + c * x) ** 3
            u = self._open01(todo.size)
            ok = (v > 0) & (np.log(u) < 0.5 * x * x + d - d * v + d * np.log(np.where(v > 0, v, 1.0)))
            out[todo[ok]] = d * v[ok]
            todo = todo[~ok]
        return out

    def dirichlet(self, alpha: float, k: int) -> np.ndarray:
        """One draw from a symmetric Dirichlet(alpha) over k categories."""
        g = self.gamma(alpha, k)
        return g / g.sum()

    def __repr__(self) -> str:
        return f"Rng(key=0x{self.key:016x}, counter={self.counter})"
