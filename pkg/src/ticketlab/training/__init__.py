"""Deterministic masked training: AdamW, checkpoints, train/evaluate loop."""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .loop import TrainResult, evaluate, run_fingerprint, train
from .optimizer import OptimizerState, TrainConfig, adamw_step, lr_at

__all__ = [
    "Checkpoint",
    "OptimizerState",
    "TrainConfig",
    "TrainResult",
    "adamw_step",
    "evaluate",
    "load_checkpoint",
    "lr_at",
    "run_fingerprint",
    "save_checkpoint",
    "train",
]
