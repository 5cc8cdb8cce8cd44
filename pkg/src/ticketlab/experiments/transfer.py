"""Transfer of pruning masks across tasks.

A transfer cell trains f(x; m_S ⊙ θ0, fresh target head) with the
target task's training algorithm and evaluates its metric. The matrix
builders are pure functions of the record list so reports can
recompute every aggregate independently of the drivers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StateError
from ..masking import Mask, prune_to_sparsity, save_mask
from .checks import CheckResult, winning_ticket_check
from .claims import mask_label
from .imp import (
    dense_run,
    imp_trajectory,
    mask_at_sparsity,
    sparsity_tag,
    standard_artifacts,
    standard_prune_run,
)
from .records import RunRecord
from .rewind import rewind_steps, rewind_weight_source
from .runner import collect_records, eval_subnetwork, make_record, run_stage
from .suite import Suite


@dataclass
class TransferMatrix:
    sources: tuple[str, ...]
    targets: tuple[str, ...]
    sparsity: float
    seeds: tuple[int, ...]
    mask_seed: int
    mean: np.ndarray            # (S, T) mean metric over seeds
    std: np.ndarray             # (S, T) sample std over seeds
    diff: np.ndarray            # mean[s, t] - same-task mean[t, t]
    row_counts: np.ndarray      # per source: #targets with transfer >= same-task
    full_mean: dict = field(default_factory=dict)   # target -> full-model mean
    full_std: dict = field(default_factory=dict)


def _cell_stats(records: list[RunRecord], mask_source: str, weight_source: str,
                target: str, sparsity: float, seeds) -> tuple[float, float]:
    vals = [r.metric for r in records
            if r.mask_source == mask_source and r.weight_source == weight_source
            and r.target_task == target and r.sparsity == sparsity and r.seed in seeds]
    if len(vals) != len(set(seeds)):
        raise StateError(
            f"cell ({mask_source} -> {target} at {sparsity}) has {len(vals)} records, "
            f"expected {len(set(seeds))}"
        )
    arr = np.asarray(vals, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def dense_stats(records: list[RunRecord], target: str, seeds) -> tuple[float, float]:
    return _cell_stats(records, "dense", "theta0", target, 0.0, seeds)


def build_transfer_matrix(records: list[RunRecord], sources, targets, sparsity: float,
                          mask_seed: int, seeds) -> TransferMatrix:
    """Aggregate records into the transfer matrix; pure, no artifact access."""
    sources, targets, seeds = tuple(sources), tuple(targets), tuple(seeds)
    mean = np.zeros((len(sources), len(targets)))
    std = np.zeros_like(mean)
    for i, s in enumerate(sources):
        for j, t in enumerate(targets):
            mean[i, j], std[i, j] = _cell_stats(
                records, mask_label(s, mask_seed), "theta0", t, sparsity, seeds)
    same = np.zeros(len(targets))
    for j, t in enumerate(targets):
        if t in sources:
            same[j] = mean[sources.index(t), j]
        else:
            same[j], _ = _cell_stats(records, mask_label(t, mask_seed), "theta0",
                                     t, sparsity, seeds)
    diff = mean - same[None, :]
    row_counts = (mean >= same[None, :]).sum(axis=1)
    full_mean, full_std = {}, {}
    for t in targets:
        try:
            full_mean[t], full_std[t] = dense_stats(records, t, seeds)
        except StateError:
            pass  # verdict columns simply absent when no dense runs were recorded
    return TransferMatrix(sources=sources, targets=targets, sparsity=float(sparsity),
                          seeds=seeds, mask_seed=int(mask_seed), mean=mean, std=std,
                          diff=diff, row_counts=row_counts,
                          full_mean=full_mean, full_std=full_std)


@dataclass(frozen=True)
class TransferJob:
    mask_source: str
    weight_source: str
    source_task: str        # task whose trajectory provides the mask ("" for direct)
    target_task: str
    sparsity: float
    seed: int
    rewind_step: int = 0
    mask_seed: int = 0


def _transfer_eval(suite: Suite, job: TransferJob) -> RunRecord:
    if job.mask_source.startswith("direct:"):
        mask = direct_mask(suite, job.sparsity)
    elif job.mask_source.startswith("standard:"):
        mask, _ = standard_artifacts(suite, job.source_task, job.mask_seed, job.sparsity)
    elif job.mask_source.startswith("multitask:"):
        from .multitask import multitask_trajectory  # late: multitask imports this module
        task_ids = tuple(job.source_task.split("+"))
        mask = multitask_trajectory(suite, task_ids, job.mask_seed, job.sparsity).final_mask
    elif job.sparsity == 0.0:
        mask = None
    else:
        mask = mask_at_sparsity(suite, job.source_task, job.mask_seed, job.sparsity,
                                rewind_step=job.rewind_step)

    if job.weight_source == "theta0":
        weights = {n: t.data for n, t in suite.theta0().backbone.items()}
    elif job.weight_source.startswith("rewind:"):
        ckpts, _ = dense_run(suite, job.source_task, job.mask_seed, (job.rewind_step,))
        weights = ckpts[job.rewind_step].theta()
    elif job.weight_source.startswith("standard-final:"):
        _, ckpt = standard_artifacts(suite, job.source_task, job.mask_seed, job.sparsity)
        weights = ckpt.theta()
    else:
        raise ConfigError(f"unknown weight source {job.weight_source!r}")

    metric, wall = eval_subnetwork(suite, job.target_task, mask, weights, job.seed)
    extra = {"source_task": job.source_task, "rewind_step": job.rewind_step,
             "mask_seed": job.mask_seed}
    if mask is not None:
        extra["actual_sparsity"] = mask.sparsity()
    return make_record(suite, mask_source=job.mask_source, weight_source=job.weight_source,
                       task_id=job.target_task, sparsity=job.sparsity, seed=job.seed,
                       metric=metric, wall=wall, extra=extra)


def _dense_job(suite: Suite, payload: tuple) -> RunRecord | None:
    task_id, seed, steps = payload
    _, record = dense_run(suite, task_id, seed, steps)
    return record


def _trajectory_job(suite: Suite, payload: tuple) -> list[RunRecord]:
    task_id, seed, target, step = payload
    return imp_trajectory(suite, task_id, seed, target, rewind_step=step).records


def _submit_cells(suite: Suite, jobs: list[TransferJob], workers: int) -> None:
    done = suite.store.completed()
    todo = [j for j in jobs
            if (j.mask_source, j.weight_source, j.target_task, float(j.sparsity),
                int(j.seed), suite.fingerprint) not in done]
    collect_records(suite, run_stage(suite, _transfer_eval, todo, workers))


def transfer_matrix(suite: Suite, sources=None, targets=None, sparsity: float | None = None,
                    seeds=None, *, mask_seed: int | None = None,
                    workers: int = 1) -> TransferMatrix:
    """Fill the (sources × targets) matrix at one sparsity.

    Masks come from each source's IMP trajectory at the fixture mask
    seed; every cell gets ``seeds`` fresh-head training runs on the
    target task.
    """
    preset = suite.preset
    sources = tuple(sources) if sources else tuple(suite.tasks)
    targets = tuple(targets) if targets else tuple(suite.tasks)
    sparsity = preset.sparsity if sparsity is None else float(sparsity)
    seeds = tuple(seeds) if seeds else preset.seeds
    mask_seed = preset.seeds[0] if mask_seed is None else int(mask_seed)
    if not 0.0 < sparsity < 1.0:
        raise ConfigError(f"transfer sparsity must be in (0, 1), got {sparsity}")

    mask_tasks = tuple(dict.fromkeys(sources + targets))  # diagonal needs every target
    dense_jobs = [(t, sd, ()) for t in targets for sd in seeds]
    dense_jobs += [(t, mask_seed, ()) for t in mask_tasks
                   if (t, mask_seed, ()) not in dense_jobs]
    collect_records(suite, run_stage(suite, _dense_job, dense_jobs, workers))
    traj_jobs = [(t, mask_seed, sparsity, 0) for t in mask_tasks]
    collect_records(suite, run_stage(suite, _trajectory_job, traj_jobs, workers))

    cells = [TransferJob(mask_label(s, mask_seed), "theta0", s, t, sparsity, sd,
                         mask_seed=mask_seed)
             for s in mask_tasks for t in targets for sd in seeds
             if s in sources or s == t]
    _submit_cells(suite, cells, workers)

    return build_transfer_matrix(suite.store.load(), sources, targets, sparsity,
                                 mask_seed, seeds)


def direct_mask(suite: Suite, sparsity: float) -> Mask:
    """One-shot magnitude prune of the pre-trained weights, no training."""
    mask = prune_to_sparsity(suite.theta0(), Mask.ones(suite.model), sparsity)
    mask.meta = {"op": "direct", "suite": suite.fingerprint, "weights": "theta0",
                 "sparsity": mask.sparsity(), "target": float(sparsity)}
    ddir = suite.root / "masks" / "direct"
    ddir.mkdir(parents=True, exist_ok=True)
    path = ddir / f"theta0-{sparsity_tag(sparsity)}.mask"
    if not path.exists():
        save_mask(path, mask)
    return mask


@dataclass
class TransferRow:
    label: str
    targets: tuple[str, ...]
    mean: np.ndarray
    std: np.ndarray


def build_transfer_row(records: list[RunRecord], mask_source: str, weight_source: str,
                       targets, sparsity: float, seeds) -> TransferRow:
    targets, seeds = tuple(targets), tuple(seeds)
    mean = np.zeros(len(targets))
    std = np.zeros(len(targets))
    for j, t in enumerate(targets):
        mean[j], std[j] = _cell_stats(records, mask_source, weight_source, t,
                                      sparsity, seeds)
    return TransferRow(label=mask_source, targets=targets, mean=mean, std=std)


def direct_prune_transfer(suite: Suite, sparsity: float, targets=None, seeds=None, *,
                          workers: int = 1) -> TransferRow:
    """Transfer row for the mask obtained by pruning θ0 directly."""
    targets = tuple(targets) if targets else tuple(suite.tasks)
    seeds = tuple(seeds) if seeds else suite.preset.seeds
    if sparsity > 0.0:
        direct_mask(suite, sparsity)  # persist once before parallel cells
    cells = [TransferJob("direct:theta0", "theta0", "", t, float(sparsity), sd)
             for t in targets for sd in seeds]
    _submit_cells(suite, cells, workers)
    return build_transfer_row(suite.store.load(), "direct:theta0", "theta0",
                              targets, float(sparsity), seeds)


@dataclass
class RewoundTransfer:
    source: str
    row_labels: tuple[str, ...]     # one per fraction plus "standard"
    targets: tuple[str, ...]
    sparsity: float
    mean: np.ndarray                # (rows, targets) absolute metrics
    relative: np.ndarray            # mean - the rewind-to-theta0 row


def build_rewound_transfer(records: list[RunRecord], source: str, steps: list[int],
                           targets, sparsity: float, mask_seed: int,
                           seeds) -> RewoundTransfer:
    targets, seeds = tuple(targets), tuple(seeds)
    rows = []
    labels = []
    for st in steps:
        row = build_transfer_row(records, mask_label(source, mask_seed, st),
                                 rewind_weight_source(source, mask_seed, st),
                                 targets, sparsity, seeds)
        rows.append(row.mean)
        labels.append(f"rewind-i{st}")
    std_row = build_transfer_row(records, f"standard:{source}:s{mask_seed}",
                                 f"standard-final:{source}:s{mask_seed}",
                                 targets, sparsity, seeds)
    rows.append(std_row.mean)
    labels.append("standard")
    mean = np.stack(rows)
    relative = mean - mean[0][None, :]
    return RewoundTransfer(source=source, row_labels=tuple(labels), targets=targets,
                           sparsity=float(sparsity), mean=mean, relative=relative)


def _standard_job(suite: Suite, payload: tuple) -> list[RunRecord]:
    task_id, seed, target = payload
    return standard_prune_run(suite, task_id, seed, target).records


def rewound_source_transfer(suite: Suite, source: str, fractions=None, targets=None,
                            sparsity: float | None = None, seeds=None, *,
                            mask_seed: int | None = None,
                            workers: int = 1) -> RewoundTransfer:
    """Transfer masks and weights rewound to each θᵢ, plus the standard row.

    Cells are reported relative to the rewind-to-θ0 row; that row of the
    relative matrix is identically zero.
    """
    preset = suite.preset
    fractions = tuple(fractions) if fractions is not None else preset.rewind_fractions
    targets = tuple(targets) if targets else tuple(suite.tasks)
    sparsity = preset.sparsity if sparsity is None else float(sparsity)
    seeds = tuple(seeds) if seeds else preset.seeds
    mask_seed = preset.seeds[0] if mask_seed is None else int(mask_seed)
    steps = rewind_steps(fractions, preset.task_steps)

    collect_records(suite, run_stage(
        suite, _dense_job, [(source, mask_seed, tuple(steps))], workers))
    traj_jobs = [(source, mask_seed, sparsity, st) for st in steps]
    collect_records(suite, run_stage(suite, _trajectory_job, traj_jobs, workers))
    collect_records(suite, run_stage(
        suite, _standard_job, [(source, mask_seed, sparsity)], workers))

    cells = []
    for st in steps:
        for t in targets:
            for sd in seeds:
                cells.append(TransferJob(mask_label(source, mask_seed, st),
                                         rewind_weight_source(source, mask_seed, st),
                                         source, t, sparsity, sd,
                                         rewind_step=st, mask_seed=mask_seed))
    for t in targets:
        for sd in seeds:
            cells.append(TransferJob(f"standard:{source}:s{mask_seed}",
                                     f"standard-final:{source}:s{mask_seed}",
                                     source, t, sparsity, sd, mask_seed=mask_seed))
    _submit_cells(suite, cells, workers)

    return build_rewound_transfer(suite.store.load(), source, steps, targets,
                                  sparsity, mask_seed, seeds)


@dataclass
class UniversalityRow:
    target: str
    winning_sparsity: float
    own_mean: float
    mlm_mean: float
    gap: float
    check: CheckResult | None
    trivial: bool = False


def winning_sparsity(records: list[RunRecord], task_id: str, grid, seeds,
                     criterion: str = "one-stddev") -> float:
    """Highest grid sparsity whose IMP subnetwork passes the check; 0.0 if none."""
    full = [r.metric for r in records
            if r.mask_source == "dense" and r.target_task == task_id and r.seed in seeds]
    if len(full) < len(tuple(seeds)):
        raise StateError(f"no full-model records for {task_id}; run the claims driver first")
    best = 0.0
    for s in sorted(grid):
        if s == 0.0:
            continue
        sub = [r.metric for r in records
               if r.target_task == task_id and r.sparsity == float(s)
               and r.seed in seeds and r.weight_source == "theta0"
               and r.mask_source == mask_label(task_id, r.seed)]
        if len(sub) < len(tuple(seeds)):
            raise StateError(f"missing IMP records for {task_id} at sparsity {s}; "
                             "run the claims driver over the grid first")
        if winning_ticket_check(sub, full, criterion).verdict:
            best = float(s)
    return best


def universality_check(suite: Suite, targets=None, seeds=None, grid=None, *,
                       mlm_task: str = "mlm", criterion: str = "one-stddev",
                       mask_seed: int | None = None,
                       workers: int = 1) -> list[UniversalityRow]:
    """Evaluate the MLM-analog mask at each target's own winning sparsity."""
    preset = suite.preset
    targets = tuple(targets) if targets else tuple(t for t in suite.tasks if t != mlm_task)
    seeds = tuple(seeds) if seeds else preset.seeds
    grid = tuple(grid) if grid is not None else preset.sparsity_grid
    mask_seed = preset.seeds[0] if mask_seed is None else int(mask_seed)

    records = suite.store.load()
    sparsities = {t: winning_sparsity(records, t, grid, seeds, criterion) for t in targets}

    needed = sorted(set(s for s in sparsities.values() if s > 0.0))
    traj_jobs = [(mlm_task, mask_seed, s, 0) for s in needed]
    if traj_jobs:
        collect_records(suite, run_stage(suite, _trajectory_job, traj_jobs, workers))
    cells = [TransferJob(mask_label(mlm_task, mask_seed), "theta0", mlm_task, t,
                         sparsities[t], sd, mask_seed=mask_seed)
             for t in targets if sparsities[t] > 0.0 for sd in seeds]
    _submit_cells(suite, cells, workers)

    records = suite.store.load()
    rows = []
    for t in targets:
        s_t = sparsities[t]
        full = [r.metric for r in records if r.mask_source == "dense"
                and r.target_task == t and r.seed in seeds]
        if s_t == 0.0:
            fm = float(np.mean(full))
            rows.append(UniversalityRow(target=t, winning_sparsity=0.0, own_mean=fm,
                                        mlm_mean=fm, gap=0.0, check=None, trivial=True))
            continue
        own = [r.metric for r in records
               if r.target_task == t and r.sparsity == s_t and r.seed in seeds
               and r.weight_source == "theta0" and r.mask_source == mask_label(t, r.seed)]
        mlm = [r.metric for r in records
               if r.target_task == t and r.sparsity == s_t and r.seed in seeds
               and r.mask_source == mask_label(mlm_task, mask_seed)
               and r.weight_source == "theta0"]
        check = winning_ticket_check(mlm, full, criterion)
        rows.append(UniversalityRow(
            target=t, winning_sparsity=s_t, own_mean=float(np.mean(own)),
            mlm_mean=float(np.mean(mlm)), gap=float(np.mean(own) - np.mean(mlm)),
            check=check))
    return rows
