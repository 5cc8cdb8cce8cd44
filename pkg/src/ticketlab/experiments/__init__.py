"""Experiment drivers: suites, IMP trajectories, and aggregate builders.

Drivers write run records (JSONL) and artifacts (masks, checkpoints)
under a suite root and skip work whose records already exist; the
``build_*`` aggregators are pure functions of the record list.
"""

from .checks import CRITERIA, CheckResult, winning_ticket_check
from .claims import VARIANTS, claim_suite, mask_label
from .imp import (
    ImpRound,
    ImpRun,
    ImpSpec,
    StandardPruneRun,
    dense_run,
    imp,
    imp_trajectory,
    mask_at_sparsity,
    resolve_rewind,
    sparsity_tag,
    standard_artifacts,
    standard_prune,
    standard_prune_run,
)
from .multitask import (
    MultitaskResult,
    multitask_imp,
    multitask_label,
    multitask_trajectory,
    pick_task_index,
    size_proportions,
)
from .records import RecordStore, RunRecord
from .rewind import rewind_steps, rewind_sweep, rewind_weight_source
from .runner import PartialFailure, collect_records, eval_subnetwork, make_record, run_stage, task_namespace
from .studies import (
    OverlapMatrix,
    SizeStudy,
    build_size_study,
    collect_imp_masks,
    dataset_size_study,
    overlap_study,
    size_task_id,
)
from .suite import PRESETS, TASK_DEFS, TASK_IDS, Suite, SuitePreset, build_suite, generate_data, get_preset, suite_fingerprint
from .transfer import (
    RewoundTransfer,
    TransferJob,
    TransferMatrix,
    TransferRow,
    UniversalityRow,
    build_rewound_transfer,
    build_transfer_matrix,
    build_transfer_row,
    dense_stats,
    direct_mask,
    direct_prune_transfer,
    rewound_source_transfer,
    transfer_matrix,
    universality_check,
    winning_sparsity,
)

__all__ = [
    "CRITERIA",
    "CheckResult",
    "ImpRound",
    "ImpRun",
    "ImpSpec",
    "MultitaskResult",
    "OverlapMatrix",
    "PRESETS",
    "PartialFailure",
    "RecordStore",
    "RewoundTransfer",
    "RunRecord",
    "SizeStudy",
    "StandardPruneRun",
    "Suite",
    "SuitePreset",
    "TASK_DEFS",
    "TASK_IDS",
    "TransferJob",
    "TransferMatrix",
    "TransferRow",
    "UniversalityRow",
    "VARIANTS",
    "build_rewound_transfer",
    "build_size_study",
    "build_suite",
    "build_transfer_matrix",
    "build_transfer_row",
    "claim_suite",
    "collect_imp_masks",
    "collect_records",
    "dataset_size_study",
    "dense_run",
    "dense_stats",
    "direct_mask",
    "direct_prune_transfer",
    "eval_subnetwork",
    "generate_data",
    "get_preset",
    "imp",
    "imp_trajectory",
    "make_record",
    "mask_at_sparsity",
    "mask_label",
    "multitask_imp",
    "multitask_label",
    "multitask_trajectory",
    "overlap_study",
    "pick_task_index",
    "resolve_rewind",
    "rewind_steps",
    "rewind_sweep",
    "rewind_weight_source",
    "rewound_source_transfer",
    "run_stage",
    "size_proportions",
    "size_task_id",
    "sparsity_tag",
    "standard_artifacts",
    "standard_prune",
    "standard_prune_run",
    "suite_fingerprint",
    "task_namespace",
    "transfer_matrix",
    "universality_check",
    "winning_sparsity",
    "winning_ticket_check",
]
