"""Winning-ticket verdicts over per-seed metric lists."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

CRITERIA = ("one-stddev", "strict")


@dataclass(frozen=True)
class CheckResult:
    verdict: bool
    criterion: str
    sub_mean: float
    sub_std: float
    full_mean: float
    full_std: float
    margin: float

    def to_dict(self) -> dict:
        return {"verdict": bool(self.verdict), "criterion": self.criterion,
                "sub_mean": self.sub_mean, "sub_std": self.sub_std,
                "full_mean": self.full_mean, "full_std": self.full_std,
                "margin": self.margin}


def _std(values: np.ndarray) -> float:
    # sample standard deviation; a single observation has no spread estimate
    return float(np.std(values, ddof=1)) if values.size > 1 else 0.0


def winning_ticket_check(sub_metrics, full_metrics,
                         criterion: str = "one-stddev") -> CheckResult:
    """Is the subnetwork matching?

    one-stddev: mean(sub) ≥ mean(full) − std(full); needs ≥ 2 full runs.
    strict:     mean(sub) ≥ mean(full).
    The margin is how far the subnetwork clears the bar (negative = fails);
    equality passes.
    """
    if criterion not in CRITERIA:
        raise ValueError(f"criterion must be one of {CRITERIA}, got {criterion!r}")
    sub = np.asarray(sub_metrics, dtype=np.float64)
    full = np.asarray(full_metrics, dtype=np.float64)
    if sub.size == 0 or full.size == 0:
        raise ValueError("metric lists must be nonempty")
    if criterion == "one-stddev" and full.size < 2:
        raise ValueError("one-stddev criterion needs at least 2 full-model runs")
    sub_mean, full_mean = float(sub.mean()), float(full.mean())
    sub_std, full_std = _std(sub), _std(full)
    bar = full_mean - full_std if criterion == "one-stddev" else full_mean
    margin = sub_mean - bar
    return CheckResult(verdict=margin >= 0.0, criterion=criterion,
                       sub_mean=sub_mean, sub_std=sub_std,
                       full_mean=full_mean, full_std=full_std, margin=margin)
