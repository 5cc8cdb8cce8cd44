"""Iterative magnitude pruning with rewinding, plus standard pruning.

The IMP procedure: train the pre-trained network to the rewind step i
once (the dense run, whose checkpoints are shared by every round), then
repeat {restore (θᵢ, γᵢ); train the masked network for the full t
steps; prune the requested fraction of remaining weights globally by
trained magnitude} until the mask reaches the target sparsity, trimming
the final round's prune count so the sparsity lands exactly on target.

Standard pruning starts from the fully trained weights θ_t instead and
never rewinds: each round prunes the current weights and continues
training them for another t steps.

Every round's mask and trained weights are persisted. Rounds before
the final trim do not depend on the target sparsity, so one trajectory
directory serves any target: reaching sparsity s only requires loading
cached rounds and re-trimming, never retraining.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..errors import ConfigError, StateError
from ..hashing import fingerprint_bytes, fingerprint_hex
from ..masking import Mask, global_magnitude_prune, is_subset, load_mask, prune_to_sparsity, save_mask
from ..training import Checkpoint, evaluate, load_checkpoint, run_fingerprint, save_checkpoint, train
from ..transformer import attach_head
from .records import RunRecord
from .runner import make_record, task_namespace
from .suite import Suite


@dataclass(frozen=True)
class ImpSpec:
    """One pruning-with-rewinding configuration.

    rewind_step: absolute step (int) or fraction of the task's training
    length (float in [0, 1]).
    """
    task_id: str
    target_sparsity: float
    rewind_step: int | float = 0
    prune_fraction: float = 0.1
    seeds: tuple[int, ...] = (1,)

    def __post_init__(self):
        if not 0.0 < self.target_sparsity < 1.0:
            raise ConfigError(f"target sparsity must be in (0, 1), got {self.target_sparsity}")
        if not 0.0 < self.prune_fraction < 1.0:
            raise ConfigError(f"prune fraction must be in (0, 1), got {self.prune_fraction}")
        if isinstance(self.rewind_step, float) and not 0.0 <= self.rewind_step <= 1.0:
            raise ConfigError(f"fractional rewind step must be in [0, 1], got {self.rewind_step}")
        if isinstance(self.rewind_step, int) and self.rewind_step < 0:
            raise ConfigError("rewind step must be nonnegative")
        if not self.seeds:
            raise ConfigError("need at least one seed")


@dataclass
class ImpRound:
    index: int
    sparsity: float
    mask_path: str
    ckpt_path: str


@dataclass
class ImpRun:
    """One seed's trajectory: full rounds plus the trimmed final mask."""
    task_id: str
    seed: int
    rewind_step: int
    prune_fraction: float
    target_sparsity: float
    rounds: list[ImpRound]
    final_mask: Mask
    final_mask_path: str
    records: list[RunRecord] = field(default_factory=list)

    def subnetwork(self, suite: Suite):
        """f(x; m ⊙ θᵢ): final mask applied to the rewound backbone."""
        from ..masking import apply

        ckpts, _ = dense_run(suite, self.task_id, self.seed, (self.rewind_step,))
        params = suite.backbone_params(ckpts[self.rewind_step].theta())
        return apply(self.final_mask, params)


def resolve_rewind(rewind_step: int | float, total_steps: int) -> int:
    if isinstance(rewind_step, float):
        step = int(round(rewind_step * total_steps))
    else:
        step = int(rewind_step)
    if not 0 <= step <= total_steps:
        raise ConfigError(f"rewind step {step} outside [0, {total_steps}]")
    return step


def sparsity_tag(s: float) -> str:
    return f"{round(s * 1e6):06d}"


def dense_run(suite: Suite, task_id: str, seed: int,
              steps: tuple[int, ...] = ()) -> tuple[dict[int, Checkpoint], RunRecord | None]:
    """Train the full (unmasked) network once per (task, seed), caching checkpoints.

    The final step t is always captured (standard pruning starts there,
    and it lets the full-model record be recovered without retraining).
    Returns the requested checkpoints and a fresh full-model record, or
    None when the record is already in the store.
    """
    task = suite.task(task_id)
    cfg = suite.preset.task_config(seed)
    ns = task_namespace(task_id)
    fp = run_fingerprint(suite.model, task.spec.head, cfg, task, ns)
    want = sorted(set(int(s) for s in steps) | {cfg.total_steps})
    ddir = suite.dense_dir(task_id) / f"seed{seed}"
    paths = {k: ddir / f"step{k:05d}.ckpt" for k in want}

    key = ("dense", "theta0", task_id, 0.0, int(seed), suite.fingerprint)
    if all(p.exists() for p in paths.values()):
        ckpts = {k: load_checkpoint(p, expect_fingerprint=fp) for k, p in paths.items()}
        record = None
        if key not in suite.store.completed():
            final = ckpts[cfg.total_steps].restore_params(suite.model, task.spec.head)
            metric = evaluate(final, task.spec.head, None, task, suite.preset.eval_batch)
            record = make_record(suite, mask_source="dense", weight_source="theta0",
                                 task_id=task_id, sparsity=0.0, seed=seed,
                                 metric=metric, wall=0.0, extra={"recovered": True})
        return ckpts, record

    params = attach_head(suite.theta0(), task.spec.head, seed=suite.head_seed(task_id, seed))
    began = time.perf_counter()
    result = train(params, task.spec.head, None, task, cfg,
                   checkpoint_steps=tuple(want), rng_namespace=ns,
                   eval_batch_size=suite.preset.eval_batch)
    wall = time.perf_counter() - began
    ddir.mkdir(parents=True, exist_ok=True)
    for k, p in paths.items():
        save_checkpoint(p, result.checkpoints[k])
    record = make_record(suite, mask_source="dense", weight_source="theta0",
                         task_id=task_id, sparsity=0.0, seed=seed,
                         metric=result.final_metric, wall=wall)
    return result.checkpoints, record


def _trajectory_spec(suite: Suite, op: str, task_id: str, seed: int,
                     rewind_step: int, prune_fraction: float) -> dict:
    return {"op": op, "suite": suite.fingerprint, "task": task_id, "seed": int(seed),
            "rewind_step": int(rewind_step), "prune_fraction": float(prune_fraction)}


def _check_round(mask_new: Mask, mask_prev: Mask, k: int, fraction: float) -> None:
    if not is_subset(mask_new, mask_prev):
        raise StateError(f"round {k} mask is not nested in the previous round's mask")
    expected = 1.0 - (1.0 - fraction) ** k
    slack = k / mask_new.total
    got = mask_new.sparsity()
    if not expected - slack <= got <= expected + slack:
        raise StateError(
            f"round {k} sparsity {got:.8f} outside [{expected - slack:.8f}, "
            f"{expected + slack:.8f}]"
        )


def imp_trajectory(suite: Suite, task_id: str, seed: int, target_sparsity: float,
                   rewind_step: int | float = 0, prune_fraction: float = 0.1) -> ImpRun:
    """Run (or extend from cache) one seed's IMP trajectory to the target sparsity."""
    if not 0.0 < target_sparsity < 1.0:
        raise ConfigError(f"target sparsity must be in (0, 1), got {target_sparsity}")
    task = suite.task(task_id)
    cfg = suite.preset.task_config(seed)
    step_i = resolve_rewind(rewind_step, cfg.total_steps)

    ckpts, dense_rec = dense_run(suite, task_id, seed, (step_i,))
    rewind_ckpt = ckpts[step_i]
    records = [dense_rec] if dense_rec is not None else []

    tdir = suite.mask_dir("imp", task_id, seed) / f"i{step_i:05d}"
    tdir.mkdir(parents=True, exist_ok=True)
    spec = _trajectory_spec(suite, "imp", task_id, seed, step_i, prune_fraction)
    spec_hash = fingerprint_hex(spec)[:16]
    traj_fp = fingerprint_bytes(spec)

    mask_prev = Mask.ones(suite.model)
    rounds: list[ImpRound] = []
    trained_arrays: dict | None = None  # backbone of the round just trained/loaded
    k = 0
    while True:
        k += 1
        mpath = tdir / f"round{k:02d}.mask"
        cpath = tdir / f"round{k:02d}.ckpt"
        if mpath.exists() and cpath.exists():
            mask_k = load_mask(mpath, suite.model)
            if mask_k.meta.get("spec_hash") != spec_hash:
                raise StateError(f"{mpath} belongs to a different trajectory config")
            trained_arrays = None  # load lazily only if this round trims
        else:
            params = rewind_ckpt.restore_params(suite.model, task.spec.head)
            result = train(params, task.spec.head, mask_prev, task, cfg,
                           rng_namespace=task_namespace(task_id),
                           eval_batch_size=suite.preset.eval_batch)
            trained_arrays = {n: t.data for n, t in result.params.backbone.items()}
            save_checkpoint(cpath, Checkpoint.capture(result.params, None, {},
                                                      cfg.total_steps, traj_fp))
            mask_k = global_magnitude_prune(result.params, mask_prev, prune_fraction)
            mask_k.meta = dict(spec, round=k, sparsity=mask_k.sparsity(),
                               trimmed=False, spec_hash=spec_hash)
            save_mask(mpath, mask_k)
        _check_round(mask_k, mask_prev, k, prune_fraction)
        rounds.append(ImpRound(k, mask_k.sparsity(), str(mpath), str(cpath)))

        if mask_k.sparsity() >= target_sparsity:
            # this is the final round: trim its prune to land exactly on target
            if trained_arrays is None:
                trained_arrays = load_checkpoint(cpath, expect_fingerprint=traj_fp).theta()
            trained = suite.backbone_params(trained_arrays)
            final = prune_to_sparsity(trained, mask_prev, target_sparsity)
            final.meta = dict(spec, round=k, sparsity=final.sparsity(), trimmed=True,
                              target=float(target_sparsity), spec_hash=spec_hash)
            fpath = tdir / f"target-{sparsity_tag(target_sparsity)}.mask"
            if not fpath.exists():
                save_mask(fpath, final)
            if not is_subset(final, mask_prev):
                raise StateError("trimmed final mask is not nested")
            return ImpRun(task_id=task_id, seed=seed, rewind_step=step_i,
                          prune_fraction=prune_fraction, target_sparsity=target_sparsity,
                          rounds=rounds, final_mask=final, final_mask_path=str(fpath),
                          records=records)
        mask_prev = mask_k


def mask_at_sparsity(suite: Suite, task_id: str, seed: int, sparsity: float,
                     rewind_step: int | float = 0) -> Mask:
    """The exact IMP mask for a target sparsity, reusing cached rounds."""
    return imp_trajectory(suite, task_id, seed, sparsity, rewind_step).final_mask


def imp(suite: Suite, spec: ImpSpec) -> dict[int, ImpRun]:
    """Run the IMP trajectory for every seed in the spec."""
    runs = {}
    for seed in spec.seeds:
        runs[seed] = imp_trajectory(suite, spec.task_id, seed, spec.target_sparsity,
                                    spec.rewind_step, spec.prune_fraction)
    return runs


@dataclass
class StandardPruneRun:
    task_id: str
    seed: int
    target_sparsity: float
    rounds: list[ImpRound]
    final_mask: Mask
    final_mask_path: str
    final_ckpt_path: str
    metric: float
    records: list[RunRecord] = field(default_factory=list)


def standard_prune_run(suite: Suite, task_id: str, seed: int, target_sparsity: float,
                       prune_fraction: float = 0.1) -> StandardPruneRun:
    """Iterative prune-and-continue-training from θ_t, no rewinding."""
    if not 0.0 < target_sparsity < 1.0:
        raise ConfigError(f"target sparsity must be in (0, 1), got {target_sparsity}")
    task = suite.task(task_id)
    cfg = suite.preset.task_config(seed)
    ckpts, dense_rec = dense_run(suite, task_id, seed, ())
    records = [dense_rec] if dense_rec is not None else []

    sdir = suite.mask_dir("standard", task_id, seed)
    sdir.mkdir(parents=True, exist_ok=True)
    spec = _trajectory_spec(suite, "standard", task_id, seed, cfg.total_steps, prune_fraction)
    spec_hash = fingerprint_hex(spec)[:16]
    traj_fp = fingerprint_bytes(spec)
    stag = sparsity_tag(target_sparsity)

    current = ckpts[cfg.total_steps].restore_params(suite.model, task.spec.head)
    mask = Mask.ones(suite.model)
    rounds: list[ImpRound] = []
    k = 0
    while True:
        candidate = global_magnitude_prune(current, mask, prune_fraction)
        if candidate.sparsity() >= target_sparsity:
            final = prune_to_sparsity(current, mask, target_sparsity)
            final.meta = dict(spec, round=k + 1, sparsity=final.sparsity(), trimmed=True,
                              target=float(target_sparsity), spec_hash=spec_hash)
            fmask_path = sdir / f"target-{stag}.mask"
            fckpt_path = sdir / f"target-{stag}.ckpt"
            if fmask_path.exists() and fckpt_path.exists():
                final = load_mask(fmask_path, suite.model)
                ck = load_checkpoint(fckpt_path, expect_fingerprint=traj_fp)
                trained = ck.restore_params(suite.model, task.spec.head)
                metric = evaluate(trained, task.spec.head, final, task, suite.preset.eval_batch)
                wall = 0.0
            else:
                save_mask(fmask_path, final)
                began = time.perf_counter()
                result = train(current, task.spec.head, final, task, cfg,
                               rng_namespace=task_namespace(task_id),
                               eval_batch_size=suite.preset.eval_batch)
                wall = time.perf_counter() - began
                metric = result.final_metric
                save_checkpoint(fckpt_path, Checkpoint.capture(result.params, None, {},
                                                               cfg.total_steps, traj_fp))
            mask_source = f"standard:{task_id}:s{seed}"
            key = (mask_source, "theta-t", task_id, float(target_sparsity),
                   int(seed), suite.fingerprint)
            if key not in suite.store.completed():
                records.append(make_record(suite, mask_source=mask_source,
                                           weight_source="theta-t", task_id=task_id,
                                           sparsity=target_sparsity, seed=seed,
                                           metric=metric, wall=wall))
            return StandardPruneRun(task_id=task_id, seed=seed,
                                    target_sparsity=target_sparsity, rounds=rounds,
                                    final_mask=final, final_mask_path=str(fmask_path),
                                    final_ckpt_path=str(fckpt_path), metric=metric,
                                    records=records)
        k += 1
        mpath = sdir / f"round{k:02d}.mask"
        cpath = sdir / f"round{k:02d}.ckpt"
        if mpath.exists() and cpath.exists():
            mask_k = load_mask(mpath, suite.model)
            if mask_k.meta.get("spec_hash") != spec_hash:
                raise StateError(f"{mpath} belongs to a different trajectory config")
            current = load_checkpoint(cpath, expect_fingerprint=traj_fp) \
                .restore_params(suite.model, task.spec.head)
        else:
            mask_k = candidate
            mask_k.meta = dict(spec, round=k, sparsity=mask_k.sparsity(), trimmed=False,
                               spec_hash=spec_hash)
            save_mask(mpath, mask_k)
            result = train(current, task.spec.head, mask_k, task, cfg,
                           rng_namespace=task_namespace(task_id),
                           eval_batch_size=suite.preset.eval_batch)
            current = result.params
            save_checkpoint(cpath, Checkpoint.capture(current, None, {},
                                                      cfg.total_steps, traj_fp))
        _check_round(mask_k, mask, k, prune_fraction)
        rounds.append(ImpRound(k, mask_k.sparsity(), str(mpath), str(cpath)))
        mask = mask_k


def standard_prune(suite: Suite, task_id: str, target_sparsity: float,
                   seeds: tuple[int, ...], prune_fraction: float = 0.1) -> list[StandardPruneRun]:
    return [standard_prune_run(suite, task_id, s, target_sparsity, prune_fraction)
            for s in seeds]


def standard_artifacts(suite: Suite, task_id: str, seed: int,
                       target_sparsity: float) -> tuple[Mask, Checkpoint]:
    """Final mask and trained weights of a completed standard-pruning run."""
    sdir = suite.mask_dir("standard", task_id, seed)
    stag = sparsity_tag(target_sparsity)
    mpath = sdir / f"target-{stag}.mask"
    cpath = sdir / f"target-{stag}.ckpt"
    if not (mpath.exists() and cpath.exists()):
        raise StateError(f"no standard-pruning artifacts for {task_id} seed {seed} "
                         f"at sparsity {target_sparsity}; run standard_prune first")
    return load_mask(mpath, suite.model), load_checkpoint(cpath)
