"""Masked training and deterministic evaluation.

Each step: sample a batch (with replacement) from the data-order
stream, build the loss under a fresh tape, backprop, zero gradients at
pruned positions, apply one AdamW update with the linearly decayed
learning rate, then re-apply the mask so pruned weights sit at exactly
0.0. Because masked weights enter the graph as ``w * m``, their
gradients are exactly zero already and their optimizer moments never
leave zero; the explicit re-zeroing guards the invariant regardless.

Two RNG streams drive a run: ``data`` (batch order) and ``mlm``
(per-step mask positions). Their 32-byte states are captured in every
checkpoint, which is what makes resume-from-checkpoint bit-identical to
an uninterrupted run.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import StateError
from ..hashing import fingerprint_bytes
from ..numerics import Rng, Tape, active_dtype, backward, cross_entropy, dtype_name, mse, reshape
from ..tasks.metrics import metric as compute_metric
from ..tasks.task import Batch, Task
from ..transformer import HeadSpec, Parameterization, forward
from .checkpoint import Checkpoint
from .optimizer import OptimizerState, TrainConfig, adamw_step, lr_at


@dataclass
class TrainResult:
    params: Parameterization
    opt: OptimizerState
    trace: list[tuple[int, float]]
    checkpoints: dict[int, Checkpoint] = field(default_factory=dict)
    final_metric: float | None = None
    fingerprint: bytes = b"\x00" * 32


def run_fingerprint(model, head_spec: HeadSpec, config: TrainConfig,
                    task: Task, rng_namespace: str) -> bytes:
    return fingerprint_bytes({
        "model": model.to_dict(),
        "head": head_spec.to_dict(),
        "train": config.to_dict(),
        "task": task.spec.task_id,
        "namespace": rng_namespace,
        "dtype": dtype_name(),
    })


def _loss(params: Parameterization, head_spec: HeadSpec, mask_f, batch: Batch):
    out = forward(params, head_spec, mask_f, batch.inputs)
    if head_spec.kind == "mlm":
        b, t, v = out.shape
        return cross_entropy(reshape(out, (b * t, v)), batch.targets, batch.weights)
    if head_spec.kind == "classifier":
        return cross_entropy(out, batch.targets)
    return mse(out, batch.targets.astype(out.data.dtype))


def _predictions(head_spec: HeadSpec, out_data: np.ndarray, batch: Batch):
    if head_spec.kind == "mlm":
        flat = out_data.reshape(-1, out_data.shape[-1])
        keep = batch.weights > 0
        return flat.argmax(axis=1)[keep], batch.targets[keep]
    if head_spec.kind == "classifier":
        return out_data.argmax(axis=1), batch.targets
    return out_data, batch.targets


def evaluate(params: Parameterization, head_spec: HeadSpec, mask, task: Task,
             batch_size: int = 64) -> float:
    """Task metric over the full (deterministic) evaluation split."""
    preds, refs = [], []
    for batch in task.eval_batches(batch_size):
        out = forward(params, head_spec, mask, batch.inputs)
        p, r = _predictions(head_spec, out.data, batch)
        preds.append(np.asarray(p))
        refs.append(np.asarray(r))
    return compute_metric(np.concatenate(preds), np.concatenate(refs),
                          task.spec.metric_id)


def train(params: Parameterization, head_spec: HeadSpec, mask, task: Task,
          config: TrainConfig, *, checkpoint_steps: tuple[int, ...] = (),
          rng_namespace: str = "train", start: Checkpoint | None = None,
          eval_batch_size: int = 64) -> TrainResult:
    """Train a (possibly masked) parameterization for config.total_steps.

    ``checkpoint_steps`` are completed-step counts at which to capture
    full state (0 = before any update). With ``start`` the run resumes
    from that checkpoint's step, streams and optimizer state.
    """
    bad = [s for s in checkpoint_steps if s < 0 or s > config.total_steps]
    if bad:
        raise StateError(f"checkpoint steps {bad} outside [0, {config.total_steps}]")
    fingerprint = run_fingerprint(params.config, head_spec, config, task, rng_namespace)

    params = params.clone(requires_grad=True)
    dtype = active_dtype()
    mask_u8 = getattr(mask, "arrays", mask)
    mask_f = None
    if mask_u8 is not None:
        mask_f = {n: np.asarray(a).astype(dtype) for n, a in mask_u8.items()}
        for n, m in mask_f.items():
            t = params.backbone[n]
            t.data = t.data * m

    tensors = params.all_tensors()
    opt = OptimizerState.zeros(tensors)
    data_rng = Rng.from_seed(config.seed, f"{rng_namespace}/data")
    mlm_rng = Rng.from_seed(config.seed, f"{rng_namespace}/mlm")
    start_step = 0

    if start is not None:
        if start.fingerprint != fingerprint:
            raise StateError(
                "resume checkpoint fingerprint does not match this run's config "
                f"({start.fingerprint.hex()[:12]} vs {fingerprint.hex()[:12]})"
            )
        params = start.restore_params(params.config, head_spec)
        restored = start.restore_optimizer()
        if restored is None:
            raise StateError("resume checkpoint has no optimizer state")
        opt = restored
        data_rng = start.restore_rng("data")
        mlm_rng = start.restore_rng("mlm")
        start_step = start.step
        tensors = params.all_tensors()

    want_ckpt = sorted(set(int(s) for s in checkpoint_steps))
    checkpoints: dict[int, Checkpoint] = {}

    def capture(step: int) -> Checkpoint:
        return Checkpoint.capture(params, opt, {"data": data_rng, "mlm": mlm_rng},
                                  step, fingerprint)

    if 0 in want_ckpt and start is None:
        checkpoints[0] = capture(0)

    trace: list[tuple[int, float]] = []
    for step in range(start_step, config.total_steps):
        picks = data_rng.integers(task.train_size, config.batch_size)
        batch = task.make_batch(picks, mlm_rng if task.is_mlm else None)
        for t in tensors.values():
            t.zero_grad()
        with Tape():
            loss = _loss(params, head_spec, mask_f, batch)
        backward(loss)
        grads = {n: t.grad for n, t in tensors.items()}
        if mask_f is not None:
            for n, m in mask_f.items():
                if grads.get(n) is not None:
                    grads[n] = grads[n] * m
        adamw_step(tensors, grads, opt, lr_at(config, step), config)
        if mask_f is not None:
            for n, m in mask_f.items():
                t = params.backbone[n]
                t.data = t.data * m
        done = step + 1
        if done in want_ckpt:
            checkpoints[done] = capture(done)
        if config.eval_interval and done % config.eval_interval == 0:
            trace.append((done, evaluate(params, head_spec, mask_f, task, eval_batch_size)))

    final = evaluate(params, head_spec, mask_f, task, eval_batch_size)
    return TrainResult(params=params, opt=opt, trace=trace, checkpoints=checkpoints,
                       final_metric=final, fingerprint=fingerprint)
