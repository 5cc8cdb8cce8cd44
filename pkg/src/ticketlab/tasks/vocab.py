"""Vocabulary with fixed reserved ids.

Ids 0..4 are reserved in every vocabulary: PAD, MASK, CLS, SEP, UNK.
Vocab files store only the regular tokens, one per line; the id of the
token on line i (0-based) is i + 5.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..errors import DataError

PAD, MASK, CLS, SEP, UNK = 0, 1, 2, 3, 4
RESERVED = ("[PAD]", "[MASK]", "[CLS]", "[SEP]", "[UNK]")
NUM_RESERVED = len(RESERVED)


@dataclass(frozen=True)
class Vocab:
    tokens: tuple[str, ...]  # full list including the reserved prefix

    def __post_init__(self):
        if tuple(self.tokens[:NUM_RESERVED]) != RESERVED:
            raise DataError(f"vocabulary must start with the reserved tokens {RESERVED}")
        if len(set(self.tokens)) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")

    @classmethod
    def synthetic(cls, size: int) -> "Vocab":
        """Reserved ids plus generic tokens t5..t<size-1>."""
        if size <= NUM_RESERVED:
            raise DataError(f"vocab size must exceed {NUM_RESERVED}, got {size}")
        return cls(RESERVED + tuple(f"t{i}" for i in range(NUM_RESERVED, size)))

    @classmethod
    def from_tokens(cls, regular: list[str]) -> "Vocab":
        return cls(RESERVED + tuple(regular))

    def __len__(self) -> int:
        return len(self.tokens)

    def id_of(self, token: str) -> int:
        try:
            return self._index()[token]
        except KeyError:
            return UNK

    def _index(self) -> dict[str, int]:
        # cached lazily on the instance despite frozen dataclass
        idx = getattr(self, "_idx", None)
        if idx is None:
            idx = {t: i for i, t in enumerate(self.tokens)}
            object.__setattr__(self, "_idx", idx)
        return idx

    def save(self, path: str | Path) -> None:
        Path(path).write_text(
            "".join(t + "\n" for t in self.tokens[NUM_RESERVED:]), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls.from_tokens([ln for ln in lines if ln])
