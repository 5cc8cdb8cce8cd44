"""Append-only run records.

Every evaluation run persists one JSON line carrying the five
provenance fields (mask source, weight source, target task, sparsity,
seed) plus the metric, wall time and the config fingerprint of the
suite that produced it. Reports are recomputed from these lines, never
from cached aggregates, and drivers use the provenance key to skip
cells that already completed under the same fingerprint.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from ..errors import LoadError
from ..hashing import fingerprint_hex

ProvKey = tuple[str, str, str, float, int, str]


@dataclass(frozen=True)
class RunRecord:
    mask_source: str
    weight_source: str
    target_task: str
    sparsity: float
    seed: int
    metric: float
    metric_id: str
    wall_time: float
    fingerprint: str
    extra: dict = field(default_factory=dict, compare=False)

    def key(self) -> ProvKey:
        """Idempotency key: provenance + config fingerprint, no metric."""
        return (self.mask_source, self.weight_source, self.target_task,
                float(self.sparsity), int(self.seed), self.fingerprint)

    @property
    def record_id(self) -> str:
        # wall_time excluded so a re-run of the same cell reproduces the id
        body = asdict(self)
        body.pop("wall_time")
        body.pop("extra")
        return fingerprint_hex(body)[:16]

    def to_json(self) -> str:
        body = asdict(self)
        body["record_id"] = self.record_id
        return json.dumps(body, sort_keys=True)

    @classmethod
    def from_json(cls, line: str) -> "RunRecord":
        raw = json.loads(line)
        raw.pop("record_id", None)
        return cls(**raw)


class RecordStore:
    """Line-delimited record file with append and filtered reads."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._cache: list[RunRecord] | None = None

    def append(self, record: RunRecord) -> None:
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with open(self.path, "a", encoding="utf-8") as fh:
            fh.write(record.to_json() + "\n")
        if self._cache is not None:
            self._cache.append(record)

    def load(self) -> list[RunRecord]:
        if self._cache is not None:
            return list(self._cache)
        records: list[RunRecord] = []
        if self.path.exists():
            with open(self.path, encoding="utf-8") as fh:
                for i, line in enumerate(fh):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        records.append(RunRecord.from_json(line))
                    except (json.JSONDecodeError, TypeError) as exc:
                        raise LoadError(f"{self.path}:{i + 1}: bad record line: {exc}") from exc
        self._cache = records
        return list(records)

    def completed(self) -> set[ProvKey]:
        return {r.key() for r in self.load()}

    def where(self, **eq) -> list[RunRecord]:
        out = []
        for r in self.load():
            if all(getattr(r, k) == v for k, v in eq.items()):
                out.append(r)
        return out

    def __len__(self) -> int:
        return len(self.load())
