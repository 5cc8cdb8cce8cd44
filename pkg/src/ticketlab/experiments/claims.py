"""Subnetwork-variant comparisons across a sparsity grid.

For each (task, sparsity, seed) cell this driver trains and evaluates
the full model plus four subnetwork variants:

  imp      IMP mask on the pre-trained weights θ0
  random   sparsity-matched random mask on θ0
  reinit   IMP mask on the raw random initialization θ0'
  shuffle  IMP mask on per-tensor shuffled pre-trained weights θ0''

Provenance strings identify the mask trajectory fully
(``imp:<task>:s<seed>:i<step>``), so cells sharing a mask dedupe across
drivers and cells that merely look alike do not.
"""

from __future__ import annotations

from dataclasses import dataclass

from ..errors import ConfigError
from ..hashing import seed_from
from ..masking import Mask, random_mask, save_mask, shuffle_reinit
from .imp import dense_run, imp_trajectory, mask_at_sparsity, sparsity_tag
from .records import RunRecord
from .runner import collect_records, eval_subnetwork, make_record, run_stage
from .suite import Suite

VARIANTS = ("imp", "random", "reinit", "shuffle")


def mask_label(task_id: str, seed: int, rewind_step: int = 0) -> str:
    return f"imp:{task_id}:s{seed}:i{rewind_step}"


@dataclass(frozen=True)
class ClaimJob:
    task_id: str
    sparsity: float
    seed: int
    variant: str


def _claim_provenance(job: ClaimJob) -> tuple[str, str]:
    """(mask_source, weight_source) for one variant cell."""
    if job.sparsity == 0.0:
        mask_source = "dense"
    elif job.variant == "random":
        rp_seed = seed_from(job.seed, f"rp/{job.task_id}/{sparsity_tag(job.sparsity)}")
        mask_source = f"random:s{rp_seed}"
    else:
        mask_source = mask_label(job.task_id, job.seed)
    weight_source = {"imp": "theta0", "random": "theta0",
                     "reinit": "theta0-prime",
                     "shuffle": f"theta0-shuffled:s{job.seed}"}[job.variant]
    return mask_source, weight_source


def claim_key(suite: Suite, job: ClaimJob) -> tuple:
    mask_source, weight_source = _claim_provenance(job)
    return (mask_source, weight_source, job.task_id, float(job.sparsity),
            int(job.seed), suite.fingerprint)


def _dense_job(suite: Suite, payload: tuple) -> RunRecord | None:
    task_id, seed = payload
    _, record = dense_run(suite, task_id, seed)
    return record


def _trajectory_job(suite: Suite, payload: tuple) -> list[RunRecord]:
    task_id, seed, target = payload
    return imp_trajectory(suite, task_id, seed, target).records


def _variant_mask(suite: Suite, job: ClaimJob) -> Mask | None:
    if job.sparsity == 0.0:
        return None
    imp_mask = mask_at_sparsity(suite, job.task_id, job.seed, job.sparsity)
    if job.variant != "random":
        return imp_mask
    # random mask matched to the IMP mask's achieved sparsity
    rp_seed = seed_from(job.seed, f"rp/{job.task_id}/{sparsity_tag(job.sparsity)}")
    rand = random_mask(suite.model, imp_mask.sparsity(), rp_seed)
    rand.meta = {"op": "random", "suite": suite.fingerprint, "task": job.task_id,
                 "seed": rp_seed, "sparsity": rand.sparsity(),
                 "matched_to": mask_label(job.task_id, job.seed)}
    rdir = suite.mask_dir("random", job.task_id, job.seed)
    rdir.mkdir(parents=True, exist_ok=True)
    rpath = rdir / f"target-{sparsity_tag(job.sparsity)}.mask"
    if not rpath.exists():
        save_mask(rpath, rand)
    return rand


def _variant_weights(suite: Suite, job: ClaimJob) -> dict:
    if job.variant in ("imp", "random"):
        params = suite.theta0()
    elif job.variant == "reinit":
        params = suite.theta0_prime()
    elif job.variant == "shuffle":
        params = shuffle_reinit(suite.theta0(), seed_from(job.seed, f"shuffle/{job.task_id}"))
    else:
        raise ConfigError(f"unknown variant {job.variant!r}")
    return {n: t.data for n, t in params.backbone.items()}


def _eval_claim(suite: Suite, job: ClaimJob) -> RunRecord:
    mask = _variant_mask(suite, job)
    weights = _variant_weights(suite, job)
    metric, wall = eval_subnetwork(suite, job.task_id, mask, weights, job.seed)
    mask_source, weight_source = _claim_provenance(job)
    actual = mask.sparsity() if mask is not None else 0.0
    return make_record(suite, mask_source=mask_source, weight_source=weight_source,
                       task_id=job.task_id, sparsity=job.sparsity, seed=job.seed,
                       metric=metric, wall=wall,
                       extra={"variant": job.variant, "actual_sparsity": actual})


def claim_suite(suite: Suite, task_ids=None, grid=None, seeds=None, *,
                variants=VARIANTS, workers: int = 1) -> list[RunRecord]:
    """Full model + the four variants for every (task, sparsity, seed).

    Completed cells (same provenance under the same suite fingerprint)
    are skipped, so re-running is a no-op.
    """
    task_ids = tuple(task_ids) if task_ids else tuple(suite.tasks)
    grid = tuple(grid) if grid is not None else suite.preset.sparsity_grid
    seeds = tuple(seeds) if seeds else suite.preset.seeds
    for s in grid:
        if not 0.0 <= s < 1.0:
            raise ConfigError(f"sparsity {s} outside [0, 1)")
    bad = [v for v in variants if v not in VARIANTS]
    if bad:
        raise ConfigError(f"unknown variants {bad}; expected subset of {VARIANTS}")

    dense_jobs = [(t, s) for t in task_ids for s in seeds]
    collect_records(suite, run_stage(suite, _dense_job, dense_jobs, workers))

    positive = [s for s in grid if s > 0.0]
    if positive:
        traj_jobs = [(t, s, max(positive)) for t in task_ids for s in seeds]
        collect_records(suite, run_stage(suite, _trajectory_job, traj_jobs, workers))

    done = suite.store.completed()
    eval_jobs = [ClaimJob(t, float(sp), sd, v)
                 for t in task_ids for sp in grid for sd in seeds for v in variants
                 if claim_key(suite, ClaimJob(t, float(sp), sd, v)) not in done]
    collect_records(suite, run_stage(suite, _eval_claim, eval_jobs, workers))

    wanted_sparsities = set(float(s) for s in grid) | {0.0}
    return [r for r in suite.store.load()
            if r.target_task in task_ids and r.seed in seeds
            and r.sparsity in wanted_sparsities and r.fingerprint == suite.fingerprint]
