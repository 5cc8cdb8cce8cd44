"""Secondary studies: training-set size sensitivity and mask overlap.

The size study reruns IMP for one source task with its training split
subsampled to each requested size, then measures how well each mask
transfers to the full tasks. The full-size row reuses the plain
trajectory, so its cells coincide with the transfer matrix.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigError
from ..hashing import seed_from
from ..masking import Mask, overlap
from ..tasks import Task, subsample
from .claims import mask_label
from .imp import mask_at_sparsity
from .records import RunRecord
from .runner import collect_records, run_stage
from .suite import Suite
from .transfer import TransferJob, TransferRow, _dense_job, _submit_cells, _trajectory_job, build_transfer_row


def size_task_id(source: str, n: int) -> str:
    return f"{source}@n{n}"


def _with_size_task(suite: Suite, source: str, n: int) -> tuple[Suite, str]:
    """Suite copy that also carries the source task subsampled to n train examples."""
    base = suite.task(source)
    if n == base.train_size:
        return suite, source
    if not 0 < n <= base.train_size:
        raise ConfigError(f"size {n} outside (0, {base.train_size}] for task {source!r}")
    tid = size_task_id(source, n)
    if tid in suite.tasks:
        return suite, tid
    ds = subsample(base.dataset, n, seed_from(suite.preset.master_seed,
                                              f"subsample/{source}/{n}"))
    spec = dataclasses.replace(base.spec, task_id=tid)
    task = Task(spec=spec, dataset=ds, seed=base.seed)
    return dataclasses.replace(suite, tasks={**suite.tasks, tid: task}), tid


@dataclass
class SizeStudy:
    source: str
    sizes: tuple[int, ...]
    targets: tuple[str, ...]
    sparsity: float
    rows: list[TransferRow]          # one per size, same order


def build_size_study(records: list[RunRecord], source: str, sizes, full_size: int,
                     targets, sparsity: float, mask_seed: int, seeds) -> SizeStudy:
    rows = []
    for n in sorted(sizes):
        tid = source if n == full_size else size_task_id(source, n)
        rows.append(build_transfer_row(records, mask_label(tid, mask_seed), "theta0",
                                       targets, sparsity, seeds))
    return SizeStudy(source=source, sizes=tuple(sorted(sizes)), targets=tuple(targets),
                     sparsity=float(sparsity), rows=rows)


def dataset_size_study(suite: Suite, source: str, sizes, targets=None,
                       sparsity: float | None = None, seeds=None, *,
                       mask_seed: int | None = None, workers: int = 1) -> SizeStudy:
    """IMP masks from shrunken training sets, transferred to the full tasks."""
    preset = suite.preset
    targets = tuple(targets) if targets else tuple(suite.tasks)
    sparsity = preset.sparsity if sparsity is None else float(sparsity)
    seeds = tuple(seeds) if seeds else preset.seeds
    mask_seed = preset.seeds[0] if mask_seed is None else int(mask_seed)
    sizes = tuple(sorted(set(int(n) for n in sizes)))
    if not sizes:
        raise ConfigError("need at least one training-set size")
    full_size = suite.task(source).train_size

    work = suite
    size_tids = []
    for n in sizes:
        work, tid = _with_size_task(work, source, n)
        size_tids.append(tid)

    collect_records(work, run_stage(work, _dense_job,
                                    [(tid, mask_seed, ()) for tid in size_tids], workers))
    collect_records(work, run_stage(work, _trajectory_job,
                                    [(tid, mask_seed, sparsity, 0) for tid in size_tids],
                                    workers))
    cells = [TransferJob(mask_label(tid, mask_seed), "theta0", tid, t, sparsity, sd,
                         mask_seed=mask_seed)
             for tid in size_tids for t in targets for sd in seeds]
    _submit_cells(work, cells, workers)

    return build_size_study(suite.store.load(), source, sizes, full_size, targets,
                            sparsity, mask_seed, seeds)


@dataclass
class OverlapMatrix:
    labels: tuple[str, ...]
    sparsity: float
    matrix: np.ndarray   # symmetric, unit diagonal


def overlap_study(masks: list[Mask], labels=None) -> OverlapMatrix:
    """Pairwise overlap of the pruned sets (Jaccard) for same-sparsity masks."""
    if len(masks) < 2:
        raise ValueError("need at least two masks to compare")
    first = masks[0]
    for i, m in enumerate(masks[1:], 1):
        if m.config != first.config:
            raise ValueError(f"mask {i} comes from a different model configuration")
        if m.pruned != first.pruned:
            raise ValueError(
                f"mask {i} prunes {m.pruned} weights, mask 0 prunes {first.pruned}; "
                "overlap comparisons need equal sparsity"
            )
    if labels is None:
        labels = tuple(str(m.meta.get("task", m.meta.get("op", f"mask{i}")))
                       for i, m in enumerate(masks))
    labels = tuple(labels)
    if len(labels) != len(masks):
        raise ValueError(f"{len(labels)} labels for {len(masks)} masks")

    n = len(masks)
    mat = np.eye(n)
    for i in range(n):
        for j in range(i + 1, n):
            mat[i, j] = mat[j, i] = overlap(masks[i], masks[j])
    return OverlapMatrix(labels=labels, sparsity=first.sparsity(), matrix=mat)


def collect_imp_masks(suite: Suite, task_ids=None, sparsity: float | None = None,
                      seed: int | None = None) -> tuple[tuple[str, ...], list[Mask]]:
    """Final IMP masks (cached trajectories) for an overlap comparison."""
    task_ids = tuple(task_ids) if task_ids else tuple(suite.tasks)
    sparsity = suite.preset.sparsity if sparsity is None else float(sparsity)
    seed = suite.preset.seeds[0] if seed is None else int(seed)
    masks = [mask_at_sparsity(suite, t, seed, sparsity) for t in task_ids]
    return task_ids, masks
