"""Batch command-line front end.

Every invocation reads an optional JSON config (published schema next
to this module), applies dotted-path ``--set`` overrides, dispatches
one experiment or report, and appends an entry to ``manifest.json``
under the output directory. All state lives under ``--out``; nothing
is read from the environment.

Exit codes: 0 success, 2 config error, 3 partial failure (completed
artifacts are retained), 4 artifact corruption or stale/missing state.
"""

from __future__ import annotations

import argparse
import json
import os
import platform
import struct
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__
from ..errors import (
    ConfigError,
    DataError,
    LoadError,
    SchemaError,
    StateError,
    TicketLabError,
)
from ..experiments import (
    TASK_IDS,
    VARIANTS,
    PartialFailure,
    RecordStore,
    build_suite,
    claim_suite,
    collect_imp_masks,
    dataset_size_study,
    generate_data,
    multitask_imp,
    overlap_study,
    rewind_sweep,
    rewound_source_transfer,
    standard_prune,
    suite_fingerprint,
    transfer_matrix,
    universality_check,
)
from ..numerics import dtype_name, set_dtype
from ..training import load_checkpoint
from .config import SCHEMA_PATH, load_config, resolve_preset
from .report import (
    REPORT_KINDS,
    build_report,
    overlap_table,
    to_text,
    trace_lines,
    write_report,
)


@dataclass
class Ctx:
    cfg: dict
    preset: object
    out: Path
    seeds: tuple[int, ...]
    workers: int
    trace: bool


def _get(args, name: str, default=None):
    return getattr(args, name, default)


def _context(args) -> Ctx:
    cfg = load_config(_get(args, "config"), list(_get(args, "set") or []))
    set_dtype(_get(args, "dtype") or cfg.get("dtype", "f32"))
    preset = resolve_preset(cfg)
    out = Path(_get(args, "out") or cfg.get("out", "ticketlab-out"))
    if _get(args, "seed") is not None:
        seeds: tuple[int, ...] = (int(args.seed),)
    else:
        seeds = tuple(int(s) for s in cfg.get("seeds", preset.seeds))
    workers = int(_get(args, "workers") or cfg.get("workers") or os.cpu_count() or 1)
    return Ctx(cfg=cfg, preset=preset, out=out, seeds=seeds, workers=workers,
               trace=bool(_get(args, "trace", False)))


def _tasks(ctx: Ctx) -> tuple[str, ...]:
    return tuple(ctx.cfg.get("tasks", TASK_IDS))


def _grid(ctx: Ctx) -> tuple[float, ...]:
    return tuple(float(s) for s in ctx.cfg.get("sparsity_grid", ctx.preset.sparsity_grid))


def _sparsity(ctx: Ctx) -> float:
    return float(ctx.cfg.get("sparsity", ctx.preset.sparsity))


def _fractions(ctx: Ctx) -> tuple[float, ...]:
    return tuple(float(f) for f in
                 ctx.cfg.get("rewind_fractions", ctx.preset.rewind_fractions))


def _mask_seed(ctx: Ctx) -> int:
    return int(ctx.cfg.get("mask_seed", ctx.seeds[0]))


def _criterion(ctx: Ctx) -> str:
    return (ctx.cfg.get("report") or {}).get("criterion") \
        or ctx.cfg.get("criterion", "one-stddev")


def _append_manifest(ctx: Ctx, command: str, elapsed: float, completed: bool) -> None:
    path = ctx.out / "manifest.json"
    entries = []
    if path.exists():
        try:
            entries = json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise LoadError(f"{path}: manifest is not valid JSON: {exc}") from exc
    entries.append({
        "command": command,
        "config": ctx.cfg,
        "preset": ctx.preset.name,
        "fingerprint": suite_fingerprint(ctx.preset),
        "dtype": dtype_name(),
        "seeds": list(ctx.seeds),
        "workers": ctx.workers,
        "versions": {"python": platform.python_version(),
                     "numpy": np.__version__, "ticketlab": __version__},
        "elapsed_s": round(elapsed, 3),
        "completed": completed,
    })
    ctx.out.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")


# -- experiment commands -----------------------------------------------------

def cmd_gen_data(ctx: Ctx) -> None:
    ds = generate_data(ctx.preset, ctx.out)
    print(f"data under {ctx.out / 'data'}: {ds.train_size} train / "
          f"{ds.eval_size} eval sequences, vocab {len(ds.vocab.tokens)}")


def cmd_pretrain(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    print(f"suite ready under {ctx.out} "
          f"(preset {ctx.preset.name}, fingerprint {suite.fingerprint[:16]})")


def cmd_imp(ctx: Ctx) -> None:
    """The headline experiment: subnetworks vs controls plus the rewind sweep.

    Covers everything the variants and rewind reports need, so the
    gen-data -> pretrain -> imp -> transfer -> report pipeline is
    self-sufficient.
    """
    suite = build_suite(ctx.out, ctx.preset)
    variants = tuple(ctx.cfg.get("variants", VARIANTS))
    before = len(suite.store.load())
    claim_suite(suite, _tasks(ctx), _grid(ctx), ctx.seeds,
                variants=variants, workers=ctx.workers)
    source = ctx.cfg.get("source") or _tasks(ctx)[0]
    rewind_sweep(suite, source, _sparsity(ctx), _fractions(ctx), ctx.seeds,
                 workers=ctx.workers)
    total = len(suite.store.load())
    print(f"imp sweep done (rewind source: {source}): "
          f"{total - before} new records, {total} on file")


def cmd_standard_prune(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    for task in _tasks(ctx):
        runs = standard_prune(suite, task, _sparsity(ctx), ctx.seeds,
                              ctx.preset.prune_fraction)
        for r in runs:
            print(f"{task} seed {r.seed}: sparsity "
                  f"{r.final_mask.sparsity():.4f}, metric {r.metric:.4f}")


def cmd_claims(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    variants = tuple(ctx.cfg.get("variants", VARIANTS))
    before = len(suite.store.load())
    claim_suite(suite, _tasks(ctx), _grid(ctx), ctx.seeds,
                variants=variants, workers=ctx.workers)
    total = len(suite.store.load())
    print(f"claims sweep done: {total - before} new records "
          f"({len(_tasks(ctx))} tasks x {len(_grid(ctx))} sparsities "
          f"x {len(ctx.seeds)} seeds, variants {', '.join(variants)})")


def cmd_rewind_sweep(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    source = ctx.cfg.get("source") or _tasks(ctx)[0]
    records = rewind_sweep(suite, source, _sparsity(ctx), _fractions(ctx), ctx.seeds,
                           workers=ctx.workers)
    print(f"rewind sweep done on {source}: {len(records)} records "
          f"(fractions {list(_fractions(ctx))} plus standard pruning)")
    targets = tuple(ctx.cfg.get("targets", _tasks(ctx)))
    rt = rewound_source_transfer(suite, source, _fractions(ctx), targets,
                                 _sparsity(ctx), ctx.seeds,
                                 mask_seed=_mask_seed(ctx), workers=ctx.workers)
    print(f"rewound-source transfer (relative to the rewind-to-pretrained row):")
    for i, label in enumerate(rt.row_labels):
        cells = "  ".join(f"{rt.relative[i, j]:+.4f}" for j in range(len(targets)))
        print(f"  {label:>12}  {cells}")


def cmd_transfer(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    sources = _tasks(ctx)
    targets = tuple(ctx.cfg.get("targets", sources))
    matrix = transfer_matrix(suite, sources, targets, _sparsity(ctx), ctx.seeds,
                             mask_seed=_mask_seed(ctx), workers=ctx.workers)
    print(f"transfer matrix ({len(sources)}x{len(targets)}) "
          f"at sparsity {matrix.sparsity:g}:")
    for i, s in enumerate(sources):
        cells = "  ".join(f"{matrix.mean[i, j]:.4f}" for j in range(len(targets)))
        print(f"  {s:>22}  {cells}  (wins {int(matrix.row_counts[i])}/{len(targets)})")
    # Universality piggybacks here: it reuses the claims records and adds
    # the MLM-mask cells at each target's winning sparsity.
    if "mlm" in sources:
        try:
            rows = universality_check(
                suite, targets=[t for t in targets if t != "mlm"], seeds=ctx.seeds,
                grid=_grid(ctx), criterion=_criterion(ctx),
                mask_seed=_mask_seed(ctx), workers=ctx.workers)
            for row in rows:
                verdict = "trivial" if row.trivial else \
                    ("pass" if row.check and row.check.verdict else "fail")
                print(f"  universality {row.target}: winning sparsity "
                      f"{row.winning_sparsity:g}, own {row.own_mean:.4f}, "
                      f"mlm {row.mlm_mean:.4f}, gap {row.gap:+.4f} [{verdict}]")
        except StateError as exc:
            print(f"  universality skipped: {exc}")


def cmd_overlap(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    labels, masks = collect_imp_masks(suite, _tasks(ctx), _sparsity(ctx),
                                      _mask_seed(ctx))
    study = overlap_study(masks, labels=list(labels))
    table = overlap_table(study.labels, study.matrix, study.sparsity)
    paths = write_report(table, ctx.out / "reports")
    print(to_text(table), end="")
    for p in paths:
        print(f"wrote {p}")


def cmd_multitask(ctx: Ctx) -> None:
    suite = build_suite(ctx.out, ctx.preset)
    task_set = tuple(ctx.cfg.get("task_set") or _tasks(ctx))
    targets = tuple(ctx.cfg.get("targets", _tasks(ctx)))
    result = multitask_imp(suite, task_set, _sparsity(ctx), targets=targets,
                           seeds=ctx.seeds, mask_seed=_mask_seed(ctx),
                           workers=ctx.workers)
    print(f"multitask mask over {'+'.join(task_set)} at sparsity "
          f"{result.run.final_mask.sparsity():.4f}; transfer row:")
    for t, m, s in zip(result.row.targets, result.row.mean, result.row.std):
        print(f"  -> {t}: {m:.4f} ± {s:.4f}")


def cmd_datasize(ctx: Ctx) -> None:
    source = ctx.cfg.get("source")
    if not source:
        raise ConfigError("datasize needs 'source' in the config")
    sizes = ctx.cfg.get("sizes")
    if not sizes:
        raise ConfigError("datasize needs 'sizes' in the config")
    suite = build_suite(ctx.out, ctx.preset)
    targets = tuple(ctx.cfg.get("targets", _tasks(ctx)))
    study = dataset_size_study(suite, source, sizes, targets, _sparsity(ctx),
                               ctx.seeds, mask_seed=_mask_seed(ctx),
                               workers=ctx.workers)
    print(f"dataset-size study on {source} at sparsity {study.sparsity:g} "
          f"(targets {', '.join(study.targets)}):")
    for n, row in zip(study.sizes, study.rows):
        cells = "  ".join(f"{m:.4f}" for m in row.mean)
        print(f"  n={n:>6}  {cells}")


# -- read-only commands ------------------------------------------------------

def cmd_report(args) -> int:
    ctx = _context(args)
    report_cfg = ctx.cfg.get("report") or {}
    kind = _get(args, "kind") or report_cfg.get("kind")
    if not kind:
        raise ConfigError("report needs --kind or a report.kind config entry; "
                          f"kinds: {', '.join(REPORT_KINDS)}")
    fmt = _get(args, "format") or report_cfg.get("format", "all")
    records = RecordStore(ctx.out / "records.jsonl").load()
    fingerprint = suite_fingerprint(ctx.preset)
    table = build_report(kind, ctx.cfg, ctx.preset, records, fingerprint, ctx.out)
    paths = write_report(table, ctx.out / "reports", fmt)
    print(to_text(table), end="")
    if ctx.trace:
        for line in trace_lines(table):
            print(f"trace: {line}")
    for p in paths:
        print(f"wrote {p}")
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.path, list(_get(args, "set") or []))
    preset = resolve_preset(cfg)
    seeds = cfg.get("seeds", list(preset.seeds))
    print(f"OK: {args.path} (schema {SCHEMA_PATH.name})")
    print(f"  preset: {preset.name}  dtype: {cfg.get('dtype', 'f32')}  "
          f"out: {cfg.get('out', 'ticketlab-out')}")
    print(f"  tasks: {', '.join(cfg.get('tasks', TASK_IDS))}")
    print(f"  seeds: {list(seeds)}  sparsity: {cfg.get('sparsity', preset.sparsity):g}  "
          f"grid: {[float(s) for s in cfg.get('sparsity_grid', preset.sparsity_grid)]}")
    return 0


def _inspect_mask(path: Path) -> None:
    data = path.read_bytes()
    off = 0

    def take(n: int, what: str) -> bytes:
        nonlocal off
        if off + n > len(data):
            raise LoadError(f"{path}: truncated while reading {what} at byte offset "
                            f"{off} (need {n} bytes, have {len(data) - off})")
        out = data[off:off + n]
        off += n
        return out

    if take(4, "magic") != b"LTMK":
        raise LoadError(f"{path}: bad magic at byte offset 0 (not a mask file)")
    version, count = struct.unpack("<HI", take(6, "header"))
    print(f"mask file {path} (format v{version}, {count} tensors)")
    total = kept = 0
    for _ in range(count):
        (name_len,) = struct.unpack("<H", take(2, "name length"))
        name = take(name_len, "name").decode("utf-8")
        (flat_len,) = struct.unpack("<Q", take(8, f"length of {name!r}"))
        raw = take((flat_len + 7) // 8, f"bitset of {name!r}")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8),
                             count=flat_len, bitorder="little")
        surviving = int(bits.sum())
        total += flat_len
        kept += surviving
        print(f"  {name:<24} {flat_len:>8} entries, {flat_len - surviving:>8} pruned")
    if off != len(data):
        raise LoadError(f"{path}: {len(data) - off} trailing bytes at offset {off}")
    print(f"  overall: {total} entries, {total - kept} pruned "
          f"(sparsity {(total - kept) / total:.6f})" if total else "  empty mask")
    meta_path = path.with_name(path.name + ".json")
    if meta_path.exists():
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        for k in sorted(meta):
            print(f"  meta {k}: {meta[k]}")
    else:
        print("  no metadata sidecar (unlabeled mask; reports will refuse it)")


def _inspect_checkpoint(path: Path) -> None:
    ckpt = load_checkpoint(path)
    groups: dict[str, tuple[int, int]] = {}
    dtype = None
    for name, arr in ckpt.tensors.items():
        prefix = name.split("/", 1)[0]
        n, size = groups.get(prefix, (0, 0))
        groups[prefix] = (n + 1, size + arr.size)
        dtype = arr.dtype
    print(f"checkpoint {path} (step {ckpt.step}, dtype {dtype}, "
          f"fingerprint {ckpt.fingerprint.hex()[:16]})")
    for prefix in sorted(groups):
        n, size = groups[prefix]
        print(f"  {prefix + '/':<8} {n:>3} tensors, {size:>9} values")
    if ckpt.rng_states:
        print(f"  rng streams: {', '.join(sorted(ckpt.rng_states))}")


def _inspect_records(path: Path) -> None:
    records = RecordStore(path).load()
    print(f"records {path}: {len(records)} lines")
    by_task: dict[str, int] = {}
    fingerprints: dict[str, int] = {}
    for r in records:
        by_task[r.target_task] = by_task.get(r.target_task, 0) + 1
        fingerprints[r.fingerprint[:16]] = fingerprints.get(r.fingerprint[:16], 0) + 1
    for t in sorted(by_task):
        print(f"  task {t}: {by_task[t]} records")
    for f in sorted(fingerprints):
        print(f"  fingerprint {f}: {fingerprints[f]} records")


def cmd_inspect(args) -> int:
    path = Path(args.path)
    if not path.exists():
        raise LoadError(f"{path}: no such file")
    with path.open("rb") as fh:
        head = fh.read(4)
    if head == b"LTCK":
        _inspect_checkpoint(path)
    elif head == b"LTMK":
        _inspect_mask(path)
    elif path.suffix == ".jsonl":
        _inspect_records(path)
    elif path.suffix == ".json":
        doc = json.loads(path.read_text(encoding="utf-8"))
        print(f"json {path}:")
        print(json.dumps(doc, indent=2, sort_keys=True)[:2000])
    else:
        raise ConfigError(f"{path}: not a checkpoint, mask, or records file")
    return 0


# -- wiring ------------------------------------------------------------------

def _experiment(fn):
    def run(args) -> int:
        ctx = _context(args)
        started = time.time()
        try:
            fn(ctx)
        except PartialFailure:
            _append_manifest(ctx, args.command, time.time() - started,
                             completed=False)
            raise
        _append_manifest(ctx, args.command, time.time() - started, completed=True)
        return 0
    return run


_EXPERIMENTS = [
    ("gen-data", cmd_gen_data, "generate the synthetic corpus and task data files"),
    ("pretrain", cmd_pretrain, "pre-train the shared backbone on the MLM task (cached)"),
    ("imp", cmd_imp,
     "IMP subnetworks vs controls across the sparsity grid, plus the rewind sweep"),
    ("standard-prune", cmd_standard_prune,
     "iterative prune-and-continue-training baseline"),
    ("claims", cmd_claims, "IMP vs random-mask / reinit / shuffle controls"),
    ("rewind-sweep", cmd_rewind_sweep,
     "IMP rewound to each checkpoint, plus standard pruning"),
    ("transfer", cmd_transfer,
     "source-to-target mask transfer matrix (and the universality rows)"),
    ("overlap", cmd_overlap, "pairwise overlap of final IMP masks"),
    ("multitask", cmd_multitask, "IMP on a jointly trained multi-task backbone"),
    ("datasize", cmd_datasize,
     "IMP masks from shrunken training sets, transferred to the full tasks"),
]


def _add_global(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("global options")
    sup = argparse.SUPPRESS
    g.add_argument("--config", metavar="PATH", default=sup,
                   help="JSON config file (schema: cli/schema.json in the package)")
    g.add_argument("--out", metavar="DIR", default=sup,
                   help="output directory (default: config 'out' or ./ticketlab-out)")
    g.add_argument("--seed", type=int, metavar="N", default=sup,
                   help="run a single seed instead of the configured list")
    g.add_argument("--workers", type=int, metavar="N", default=sup,
                   help="worker pool size (default: config value or all cores)")
    g.add_argument("--dtype", choices=("f32", "f64"), default=sup,
                   help="float precision (default: config value or f32)")
    g.add_argument("--trace", action="store_true", default=sup,
                   help="print the record ids behind every report cell")
    g.add_argument("--set", action="append", metavar="KEY=VALUE", default=sup,
                   help="dotted-path config override, repeatable "
                        "(e.g. --set preset_overrides.task_steps=50)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ticketlab",
        description="Lottery-ticket experiments on a small transformer encoder.")
    _add_global(parser)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for name, fn, help_text in _EXPERIMENTS:
        sp = sub.add_parser(name, help=help_text)
        _add_global(sp)
        sp.set_defaults(func=_experiment(fn))

    sp = sub.add_parser("report",
                        help="render a table or heatmap from run records (read-only)")
    _add_global(sp)
    sp.add_argument("--kind", choices=REPORT_KINDS, default=argparse.SUPPRESS,
                    help="which aggregate to render (or set report.kind in the config)")
    sp.add_argument("--format", choices=("csv", "svg", "text", "all"),
                    default=argparse.SUPPRESS, help="output format (default: all)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("validate", help="schema-check a config file")
    _add_global(sp)
    sp.add_argument("path", help="config file to validate")
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("inspect",
                        help="summarize a checkpoint, mask, or records file (read-only)")
    _add_global(sp)
    sp.add_argument("path", help="artifact to inspect")
    sp.set_defaults(func=cmd_inspect)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except PartialFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SchemaError, ConfigError, DataError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (LoadError, StateError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4
    except TicketLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
