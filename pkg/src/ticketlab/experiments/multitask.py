"""IMP on a backbone trained with a multi-task objective.

Each training step samples one task with probability proportional to
its training-set size, then applies that task's head and loss to the
shared (masked) backbone. Pruning is global magnitude over the shared
backbone, exactly as in single-task IMP. A single-task set degenerates
to plain IMP and is delegated to it, so the masks coincide by
construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, StateError
from ..hashing import fingerprint_bytes, fingerprint_hex, seed_from
from ..masking import Mask, global_magnitude_prune, is_subset, load_mask, prune_to_sparsity, save_mask
from ..numerics import Rng, Tape, active_dtype, backward
from ..training import Checkpoint, OptimizerState, adamw_step, load_checkpoint, lr_at, save_checkpoint
from ..training.loop import _loss
from ..transformer import Parameterization, attach_head
from .imp import ImpRound, ImpRun, _check_round, imp_trajectory, sparsity_tag
from .records import RunRecord
from .runner import collect_records, run_stage
from .suite import Suite
from .transfer import TransferJob, TransferRow, _submit_cells, build_transfer_row


def _check_shared_vocab(suite: Suite, task_ids) -> None:
    vocabs = {tid: suite.task(tid).dataset.vocab for tid in task_ids}
    base = next(iter(vocabs.values()))
    for tid, v in vocabs.items():
        if v.tokens != base.tokens:
            raise ConfigError(f"task {tid!r} uses a different vocabulary; "
                              "multi-task training needs one shared vocab")


def size_proportions(suite: Suite, task_ids) -> np.ndarray:
    sizes = np.array([suite.task(t).train_size for t in task_ids], dtype=np.float64)
    return sizes / sizes.sum()


def pick_task_index(cumulative: np.ndarray, u: float) -> int:
    return int(np.searchsorted(cumulative, u, side="right"))


def multitask_label(task_ids, seed: int, rewind_step: int = 0) -> str:
    return f"multitask:{'+'.join(task_ids)}:s{seed}:i{rewind_step}"


def _multitask_train(suite: Suite, task_ids: tuple[str, ...], mask, seed: int,
                     namespace: str) -> dict[str, np.ndarray]:
    """Train the shared backbone on the task mixture; returns trained backbone arrays."""
    cfg = suite.preset.task_config(seed)
    dtype = active_dtype()
    shared = suite.theta0().clone(requires_grad=True)

    mask_u8 = getattr(mask, "arrays", mask)
    mask_f = None
    if mask_u8 is not None:
        mask_f = {n: np.asarray(a).astype(dtype) for n, a in mask_u8.items()}
        for n, m in mask_f.items():
            t = shared.backbone[n]
            t.data = t.data * m

    views: dict[str, Parameterization] = {}
    tensors: dict[str, object] = dict(shared.backbone)
    for tid in task_ids:
        spec = suite.task(tid).spec.head
        donor = attach_head(shared, spec, seed_from(suite.preset.master_seed,
                                                    f"mt-head/{tid}/{seed}"))
        views[tid] = Parameterization(config=suite.model, backbone=shared.backbone,
                                      head_spec=spec, head=donor.head)
        for hname, t in donor.head.items():
            tensors[f"{tid}::{hname}"] = t

    opt = OptimizerState.zeros(tensors)
    probs = size_proportions(suite, task_ids)
    cumulative = np.cumsum(probs)
    pick_rng = Rng.from_seed(seed, f"{namespace}/pick")
    data_rngs = {tid: Rng.from_seed(seed, f"{namespace}/data/{tid}") for tid in task_ids}
    mlm_rngs = {tid: Rng.from_seed(seed, f"{namespace}/mlm/{tid}") for tid in task_ids}

    for step in range(cfg.total_steps):
        u = float(pick_rng.uniform(1)[0])
        tid = task_ids[pick_task_index(cumulative, u)]
        task = suite.task(tid)
        picks = data_rngs[tid].integers(task.train_size, cfg.batch_size)
        batch = task.make_batch(picks, mlm_rngs[tid] if task.is_mlm else None)
        for t in tensors.values():
            t.zero_grad()
        with Tape():
            loss = _loss(views[tid], task.spec.head, mask_f, batch)
        backward(loss)
        grads = {n: t.grad for n, t in tensors.items()}
        if mask_f is not None:
            for n, m in mask_f.items():
                if grads.get(n) is not None:
                    grads[n] = grads[n] * m
        adamw_step(tensors, grads, opt, lr_at(cfg, step), cfg)
        if mask_f is not None:
            for n, m in mask_f.items():
                t = shared.backbone[n]
                t.data = t.data * m
    return {n: t.data for n, t in shared.backbone.items()}


def multitask_trajectory(suite: Suite, task_ids, seed: int, target_sparsity: float,
                         prune_fraction: float = 0.1) -> ImpRun:
    """IMP on the multi-task objective; single-task sets delegate to plain IMP."""
    task_ids = tuple(task_ids)
    if not task_ids:
        raise ConfigError("need at least one task")
    if len(task_ids) == 1:
        return imp_trajectory(suite, task_ids[0], seed, target_sparsity,
                              prune_fraction=prune_fraction)
    _check_shared_vocab(suite, task_ids)
    if not 0.0 < target_sparsity < 1.0:
        raise ConfigError(f"target sparsity must be in (0, 1), got {target_sparsity}")

    joined = "+".join(task_ids)
    namespace = f"multitask/{joined}"
    tdir = suite.mask_dir("multitask", joined, seed) / "i00000"
    tdir.mkdir(parents=True, exist_ok=True)
    spec = {"op": "multitask", "suite": suite.fingerprint, "tasks": list(task_ids),
            "seed": int(seed), "rewind_step": 0, "prune_fraction": float(prune_fraction)}
    spec_hash = fingerprint_hex(spec)[:16]
    traj_fp = fingerprint_bytes(spec)

    mask_prev = Mask.ones(suite.model)
    rounds: list[ImpRound] = []
    trained_arrays: dict | None = None
    k = 0
    while True:
        k += 1
        mpath = tdir / f"round{k:02d}.mask"
        cpath = tdir / f"round{k:02d}.ckpt"
        if mpath.exists() and cpath.exists():
            mask_k = load_mask(mpath, suite.model)
            if mask_k.meta.get("spec_hash") != spec_hash:
                raise StateError(f"{mpath} belongs to a different trajectory config")
            trained_arrays = None
        else:
            trained_arrays = _multitask_train(suite, task_ids, mask_prev, seed, namespace)
            trained = suite.backbone_params(trained_arrays)
            save_checkpoint(cpath, Checkpoint.capture(trained, None, {},
                                                      suite.preset.task_steps, traj_fp))
            mask_k = global_magnitude_prune(trained, mask_prev, prune_fraction)
            mask_k.meta = dict(spec, round=k, sparsity=mask_k.sparsity(),
                               trimmed=False, spec_hash=spec_hash)
            save_mask(mpath, mask_k)
        _check_round(mask_k, mask_prev, k, prune_fraction)
        rounds.append(ImpRound(k, mask_k.sparsity(), str(mpath), str(cpath)))
        if mask_k.sparsity() >= target_sparsity:
            if trained_arrays is None:
                trained_arrays = load_checkpoint(cpath, expect_fingerprint=traj_fp).theta()
            final = prune_to_sparsity(suite.backbone_params(trained_arrays), mask_prev,
                                      target_sparsity)
            final.meta = dict(spec, round=k, sparsity=final.sparsity(), trimmed=True,
                              target=float(target_sparsity), spec_hash=spec_hash)
            fpath = tdir / f"target-{sparsity_tag(target_sparsity)}.mask"
            if not fpath.exists():
                save_mask(fpath, final)
            if not is_subset(final, mask_prev):
                raise StateError("trimmed final mask is not nested")
            return ImpRun(task_id=joined, seed=seed, rewind_step=0,
                          prune_fraction=prune_fraction, target_sparsity=target_sparsity,
                          rounds=rounds, final_mask=final, final_mask_path=str(fpath))
        mask_prev = mask_k


@dataclass
class MultitaskResult:
    task_ids: tuple[str, ...]
    run: ImpRun
    row: TransferRow
    records: list[RunRecord] = field(default_factory=list)


def _trajectory_job(suite: Suite, payload: tuple) -> list[RunRecord]:
    task_ids, seed, target = payload
    return multitask_trajectory(suite, task_ids, seed, target).records or []


def multitask_imp(suite: Suite, task_ids=None, target_sparsity: float | None = None,
                  targets=None, seeds=None, *, mask_seed: int | None = None,
                  workers: int = 1) -> MultitaskResult:
    """Find one multi-task mask and emit its transfer row."""
    preset = suite.preset
    task_ids = tuple(task_ids) if task_ids else tuple(suite.tasks)
    targets = tuple(targets) if targets else tuple(suite.tasks)
    target_sparsity = preset.sparsity if target_sparsity is None else float(target_sparsity)
    seeds = tuple(seeds) if seeds else preset.seeds
    mask_seed = preset.seeds[0] if mask_seed is None else int(mask_seed)

    collect_records(suite, run_stage(suite, _trajectory_job,
                                     [(task_ids, mask_seed, target_sparsity)], workers))
    run = multitask_trajectory(suite, task_ids, mask_seed, target_sparsity)

    if len(task_ids) == 1:
        label = f"imp:{task_ids[0]}:s{mask_seed}:i0"
        source_task = task_ids[0]
    else:
        label = multitask_label(task_ids, mask_seed)
        source_task = "+".join(task_ids)
    cells = [TransferJob(label, "theta0", source_task, t, target_sparsity, sd,
                         mask_seed=mask_seed)
             for t in targets for sd in seeds]
    _submit_cells(suite, cells, workers)
    row = build_transfer_row(suite.store.load(), label, "theta0", targets,
                             target_sparsity, seeds)
    return MultitaskResult(task_ids=task_ids, run=run, row=row)
