"""Rewind-point sweep: IMP at several rewind fractions plus standard pruning.

One dense run per seed captures checkpoints at every requested rewind
step up front; each fraction then runs its own IMP trajectory (masks
depend on the rewind point) and the resulting subnetwork is trained
from (m ⊙ θᵢ, γᵢ) for the full t steps. The sixth row is standard
pruning at the same sparsity.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from .imp import dense_run, imp_trajectory, resolve_rewind, standard_prune_run
from .claims import mask_label
from .records import RunRecord
from .runner import collect_records, eval_from_checkpoint, make_record, run_stage
from .suite import Suite


@dataclass(frozen=True)
class RewindJob:
    task_id: str
    sparsity: float
    seed: int
    step: int


def rewind_steps(fractions, total_steps: int) -> list[int]:
    steps = [resolve_rewind(float(f), total_steps) for f in fractions]
    for a, b in zip(steps, steps[1:]):
        if b <= a:
            raise ConfigError(
                f"rewind steps must strictly increase with fraction, got {steps} "
                f"for t={total_steps}"
            )
    return steps


def rewind_weight_source(task_id: str, seed: int, step: int) -> str:
    return "theta0" if step == 0 else f"rewind:{task_id}:s{seed}:i{step}"


def _dense_job(suite: Suite, payload: tuple) -> RunRecord | None:
    task_id, seed, steps = payload
    _, record = dense_run(suite, task_id, seed, steps)
    return record


def _trajectory_job(suite: Suite, payload: tuple) -> list[RunRecord]:
    task_id, seed, target, step = payload
    return imp_trajectory(suite, task_id, seed, target, rewind_step=step).records


def _standard_job(suite: Suite, payload: tuple) -> list[RunRecord]:
    task_id, seed, target = payload
    return standard_prune_run(suite, task_id, seed, target).records


def _eval_rewound(suite: Suite, job: RewindJob) -> RunRecord:
    mask = imp_trajectory(suite, job.task_id, job.seed, job.sparsity,
                          rewind_step=job.step).final_mask
    ckpts, _ = dense_run(suite, job.task_id, job.seed, (job.step,))
    metric, wall = eval_from_checkpoint(suite, job.task_id, ckpts[job.step], mask, job.seed)
    return make_record(suite, mask_source=mask_label(job.task_id, job.seed, job.step),
                       weight_source=rewind_weight_source(job.task_id, job.seed, job.step),
                       task_id=job.task_id, sparsity=job.sparsity, seed=job.seed,
                       metric=metric, wall=wall,
                       extra={"rewind_step": job.step, "actual_sparsity": mask.sparsity()})


def rewind_sweep(suite: Suite, task_id: str, sparsity: float | None = None,
                 fractions=None, seeds=None, *, workers: int = 1) -> list[RunRecord]:
    """Six-row sweep: each rewind fraction plus a standard-pruning row."""
    preset = suite.preset
    sparsity = preset.sparsity if sparsity is None else float(sparsity)
    fractions = tuple(fractions) if fractions is not None else preset.rewind_fractions
    seeds = tuple(seeds) if seeds else preset.seeds
    steps = rewind_steps(fractions, preset.task_steps)

    dense_jobs = [(task_id, sd, tuple(steps)) for sd in seeds]
    collect_records(suite, run_stage(suite, _dense_job, dense_jobs, workers))

    traj_jobs = [(task_id, sd, sparsity, st) for sd in seeds for st in steps]
    collect_records(suite, run_stage(suite, _trajectory_job, traj_jobs, workers))

    done = suite.store.completed()
    eval_jobs = []
    for st in steps:
        for sd in seeds:
            job = RewindJob(task_id, float(sparsity), sd, st)
            key = (mask_label(task_id, sd, st), rewind_weight_source(task_id, sd, st),
                   task_id, float(sparsity), int(sd), suite.fingerprint)
            if key not in done:
                eval_jobs.append(job)
    collect_records(suite, run_stage(suite, _eval_rewound, eval_jobs, workers))

    std_jobs = [(task_id, sd, float(sparsity)) for sd in seeds]
    collect_records(suite, run_stage(suite, _standard_job, std_jobs, workers))

    keep_masks = {mask_label(task_id, sd, st) for sd in seeds for st in steps} \
        | {f"standard:{task_id}:s{sd}" for sd in seeds} | {"dense"}
    return [r for r in suite.store.load()
            if r.target_task == task_id and r.seed in seeds
            and r.mask_source in keep_masks and r.fingerprint == suite.fingerprint]
