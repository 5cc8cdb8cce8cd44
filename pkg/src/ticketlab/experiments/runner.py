"""Shared machinery for evaluation runs and the worker pool.

An evaluation run trains a (mask, weights, fresh-or-rewound head)
triple with the target task's training algorithm and reports the task
metric. Drivers submit independent (task, seed, variant) runs to a
process pool; children only compute and write disjoint artifact files,
while all record appending happens in the parent after each stage.
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..errors import TicketLabError
from ..masking import Mask
from ..numerics import dtype_name, set_dtype
from ..training import train
from .records import RunRecord
from .suite import Suite


class PartialFailure(TicketLabError):
    """Some parallel runs failed; completed artifacts were retained."""

    def __init__(self, failures: list[tuple[object, str]], total: int):
        self.failures = failures
        self.total = total
        first = failures[0][1] if failures else ""
        super().__init__(f"{len(failures)} of {total} runs failed; first error: {first}")


@dataclass
class Outcome:
    payload: object
    ok: bool
    value: object = None
    error: str = ""


_WORKER_SUITE: Suite | None = None


def _init_worker(suite: Suite, dtype: str) -> None:
    global _WORKER_SUITE
    set_dtype(dtype)
    _WORKER_SUITE = suite


def _call(fn, payload):
    return fn(_WORKER_SUITE, payload)


def run_stage(suite: Suite, fn, payloads: list, workers: int = 1) -> list[Outcome]:
    """Run fn(suite, payload) for each payload, optionally in a process pool.

    Returns outcomes in payload order. The caller decides how to handle
    failures; raising PartialFailure after persisting successful results
    is the usual move.
    """
    outcomes: list[Outcome] = []
    if workers <= 1 or len(payloads) <= 1:
        for p in payloads:
            try:
                outcomes.append(Outcome(p, True, fn(suite, p)))
            except Exception as exc:  # noqa: BLE001 - collected for partial-failure reporting
                outcomes.append(Outcome(p, False, error=f"{type(exc).__name__}: {exc}"))
        return outcomes
    with ProcessPoolExecutor(max_workers=min(workers, len(payloads)),
                             initializer=_init_worker, initargs=(suite, dtype_name())) as pool:
        futures = [pool.submit(_call, fn, p) for p in payloads]
        for p, fut in zip(payloads, futures):
            try:
                outcomes.append(Outcome(p, True, fut.result()))
            except Exception as exc:  # noqa: BLE001
                outcomes.append(Outcome(p, False, error=f"{type(exc).__name__}: {exc}"))
    return outcomes


def collect_records(suite: Suite, outcomes: list[Outcome]) -> list[RunRecord]:
    """Append new records from successful outcomes; raise on failures.

    Outcome values may be a RunRecord, a list of RunRecords, or None.
    """
    done = suite.store.completed()
    fresh: list[RunRecord] = []
    for out in outcomes:
        if not out.ok:
            continue
        values = out.value
        if values is None:
            values = []
        elif isinstance(values, RunRecord):
            values = [values]
        for rec in values:
            if rec.key() not in done:
                suite.store.append(rec)
                done.add(rec.key())
                fresh.append(rec)
    failures = [(o.payload, o.error) for o in outcomes if not o.ok]
    if failures:
        raise PartialFailure(failures, len(outcomes))
    return fresh


def task_namespace(task_id: str) -> str:
    return f"task/{task_id}"


def eval_subnetwork(suite: Suite, task_id: str, mask: Mask | None,
                    weights: dict[str, np.ndarray], seed: int, *,
                    head_seed: int | None = None, steps: int | None = None) -> tuple[float, float]:
    """Train f(mask ⊙ weights, fresh head) with the task's algorithm; metric + wall time."""
    from ..transformer import attach_head

    task = suite.task(task_id)
    cfg = suite.preset.task_config(seed, steps)
    backbone = suite.backbone_params(weights)
    hs = suite.head_seed(task_id, seed) if head_seed is None else head_seed
    params = attach_head(backbone, task.spec.head, seed=hs)
    began = time.perf_counter()
    result = train(params, task.spec.head, mask, task, cfg,
                   rng_namespace=task_namespace(task_id),
                   eval_batch_size=suite.preset.eval_batch)
    return float(result.final_metric), time.perf_counter() - began


def eval_from_checkpoint(suite: Suite, task_id: str, ckpt, mask: Mask | None,
                         seed: int, *, steps: int | None = None) -> tuple[float, float]:
    """Like eval_subnetwork, but weights AND head come from a rewind checkpoint."""
    task = suite.task(task_id)
    cfg = suite.preset.task_config(seed, steps)
    params = ckpt.restore_params(suite.model, task.spec.head)
    began = time.perf_counter()
    result = train(params, task.spec.head, mask, task, cfg,
                   rng_namespace=task_namespace(task_id),
                   eval_batch_size=suite.preset.eval_batch)
    return float(result.final_metric), time.perf_counter() - began


def make_record(suite: Suite, *, mask_source: str, weight_source: str, task_id: str,
                sparsity: float, seed: int, metric: float, wall: float,
                extra: dict | None = None) -> RunRecord:
    task = suite.task(task_id)
    return RunRecord(mask_source=mask_source, weight_source=weight_source,
                     target_task=task_id, sparsity=float(sparsity), seed=int(seed),
                     metric=float(metric), metric_id=task.spec.metric_id,
                     wall_time=float(wall), fingerprint=suite.fingerprint,
                     extra=extra or {})
