"""Report tables and renderers.

Every table is recomputed from raw run records at render time — no
cached aggregates. Records whose config fingerprint differs from the
current one are set aside as stale; a cell that can only be filled by
stale records is an error naming them, never a silent fallback.

Renderers are pure functions of the table, so identical records produce
byte-identical CSV/SVG/text output. The SVG heatmap fills cells with a
monotone grayscale (higher value = darker) and outlines cells that pass
the winning-ticket check; the mapping is documented in the file's
``<desc>`` element.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import ConfigError, StateError
from ..experiments import (
    TASK_IDS,
    mask_label,
    overlap_study,
    rewind_steps,
    rewind_weight_source,
    winning_sparsity,
    winning_ticket_check,
)
from ..experiments.imp import sparsity_tag
from ..experiments.records import RunRecord
from ..masking import load_mask

REPORT_KINDS = (
    "variants",
    "sparsity-curve",
    "rewind",
    "universality",
    "transfer-matrix",
    "transfer-diff",
    "rewound-transfer",
    "overlap",
)

VARIANT_ROWS = ("full", "imp", "random", "reinit", "shuffle")


@dataclass
class Cell:
    value: float | None = None
    std: float | None = None
    n: int = 0
    verdict: bool | None = None
    records: tuple[str, ...] = ()


@dataclass
class Table:
    kind: str
    title: str
    row_labels: tuple[str, ...]
    col_labels: tuple[str, ...]
    cells: list[list[Cell]]
    notes: tuple[str, ...] = ()

    def cell(self, row: str, col: str) -> Cell:
        return self.cells[self.row_labels.index(row)][self.col_labels.index(col)]


def _fmt(x: float) -> str:
    return f"{x:g}"


class RecordIndex:
    """Record lookup that distinguishes missing cells from stale ones."""

    def __init__(self, records: list[RunRecord], fingerprint: str):
        self.fingerprint = fingerprint
        self.current = [r for r in records if r.fingerprint == fingerprint]
        self.stale = [r for r in records if r.fingerprint != fingerprint]

    def metrics(self, pred, seeds, what: str) -> tuple[list[float], tuple[str, ...]]:
        """One metric per seed, ordered by seed; error on missing or stale."""
        seeds = tuple(seeds)
        hits = {}
        for r in self.current:
            if r.seed in seeds and pred(r):
                if r.seed in hits:
                    raise StateError(f"{what}: duplicate records for seed {r.seed} "
                                     f"({hits[r.seed].record_id}, {r.record_id})")
                hits[r.seed] = r
        missing = [s for s in seeds if s not in hits]
        if missing:
            stale_ids = [r.record_id for r in self.stale if pred(r) and r.seed in seeds]
            if stale_ids:
                raise StateError(
                    f"{what}: only stale records match (config fingerprint differs): "
                    f"{', '.join(sorted(stale_ids))}; re-run the drivers under the "
                    "current config"
                )
            raise StateError(f"{what}: no records for seeds {missing}; "
                             "run the corresponding driver first")
        ordered = [hits[s] for s in seeds]
        return [r.metric for r in ordered], tuple(r.record_id for r in ordered)

    def stat_cell(self, pred, seeds, what: str, full: list[float] | None = None,
                  criterion: str = "one-stddev") -> Cell:
        vals, ids = self.metrics(pred, seeds, what)
        arr = np.asarray(vals, dtype=np.float64)
        std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
        verdict = None
        if full is not None:
            verdict = winning_ticket_check(vals, full, criterion).verdict
        return Cell(value=float(arr.mean()), std=std, n=arr.size, verdict=verdict,
                    records=ids)


# -- predicates ------------------------------------------------------------

def _dense(task: str):
    return lambda r: (r.mask_source == "dense" and r.weight_source == "theta0"
                      and r.target_task == task and r.sparsity == 0.0)


def _variant(task: str, s: float, variant: str):
    """Claims cells: the mask trajectory seed equals the evaluation seed."""
    s = float(s)
    if variant == "imp":
        return lambda r: (r.target_task == task and r.sparsity == s
                          and r.weight_source == "theta0"
                          and r.mask_source == mask_label(task, r.seed))
    if variant == "random":
        return lambda r: (r.target_task == task and r.sparsity == s
                          and r.weight_source == "theta0"
                          and r.mask_source.startswith("random:s"))
    if variant == "reinit":
        return lambda r: (r.target_task == task and r.sparsity == s
                          and r.weight_source == "theta0-prime"
                          and r.mask_source == mask_label(task, r.seed))
    if variant == "shuffle":
        return lambda r: (r.target_task == task and r.sparsity == s
                          and r.weight_source.startswith("theta0-shuffled:")
                          and r.mask_source == mask_label(task, r.seed))
    raise ConfigError(f"unknown variant {variant!r}")


def _transfer_cell(source: str, target: str, s: float, mask_seed: int):
    return lambda r: (r.target_task == target and r.sparsity == float(s)
                      and r.weight_source == "theta0"
                      and r.mask_source == mask_label(source, mask_seed))


# -- builders ---------------------------------------------------------------

def variants_table(records, fingerprint: str, tasks, grid, seeds,
                   criterion: str = "one-stddev") -> Table:
    """Per task and sparsity: full model plus the four subnetwork variants."""
    idx = RecordIndex(records, fingerprint)
    tasks, seeds = tuple(tasks), tuple(seeds)
    grid = tuple(float(s) for s in grid if s > 0.0)
    cols = ("0",) + tuple(_fmt(s) for s in grid)
    rows, cells = [], []
    for task in tasks:
        full_vals, full_ids = idx.metrics(_dense(task), seeds, f"full model on {task}")
        farr = np.asarray(full_vals)
        fstd = float(np.std(farr, ddof=1)) if farr.size > 1 else 0.0
        for variant in VARIANT_ROWS:
            rows.append(f"{task}/{variant}")
            line = []
            if variant == "full":
                line.append(Cell(value=float(farr.mean()), std=fstd, n=farr.size,
                                 records=full_ids))
                line.extend(Cell() for _ in grid)
            else:
                line.append(Cell())
                for s in grid:
                    line.append(idx.stat_cell(_variant(task, s, variant), seeds,
                                              f"{variant} on {task} at {s}",
                                              full=full_vals, criterion=criterion))
            cells.append(line)
    return Table(kind="variants", title="subnetwork variants by sparsity",
                 row_labels=tuple(rows), col_labels=cols, cells=cells,
                 notes=(f"verdict criterion: {criterion} (vs the same task's full model)",
                        f"seeds: {list(seeds)}"))


def sparsity_curve_table(records, fingerprint: str, task: str, grid, seeds,
                         criterion: str = "one-stddev") -> Table:
    """One task's metric-versus-sparsity curves, one row per variant."""
    idx = RecordIndex(records, fingerprint)
    seeds = tuple(seeds)
    grid = tuple(float(s) for s in grid if s > 0.0)
    full_vals, full_ids = idx.metrics(_dense(task), seeds, f"full model on {task}")
    farr = np.asarray(full_vals)
    fstd = float(np.std(farr, ddof=1)) if farr.size > 1 else 0.0
    full_cell = Cell(value=float(farr.mean()), std=fstd, n=farr.size, records=full_ids)
    rows, cells = [], []
    for variant in VARIANT_ROWS:
        rows.append(variant)
        if variant == "full":
            cells.append([full_cell for _ in grid])
        else:
            cells.append([idx.stat_cell(_variant(task, s, variant), seeds,
                                        f"{variant} on {task} at {s}",
                                        full=full_vals, criterion=criterion)
                          for s in grid])
    return Table(kind="sparsity-curve", title=f"{task}: metric vs sparsity",
                 row_labels=tuple(rows), col_labels=tuple(_fmt(s) for s in grid),
                 cells=cells,
                 notes=("full row repeats the dense reference at every sparsity",
                        f"verdict criterion: {criterion}", f"seeds: {list(seeds)}"))


def rewind_table(records, fingerprint: str, task: str, fractions, sparsity: float,
                 seeds, task_steps: int, criterion: str = "one-stddev") -> Table:
    """Rewind-fraction rows plus the standard-pruning row at one sparsity."""
    idx = RecordIndex(records, fingerprint)
    seeds = tuple(seeds)
    steps = rewind_steps(tuple(fractions), task_steps)
    full_vals, full_ids = idx.metrics(_dense(task), seeds, f"full model on {task}")
    farr = np.asarray(full_vals)
    rows = ["full"]
    cells = [[Cell(value=float(farr.mean()),
                   std=float(np.std(farr, ddof=1)) if farr.size > 1 else 0.0,
                   n=farr.size, records=full_ids)]]
    for frac, st in zip(fractions, steps):
        def pred(r, st=st):
            return (r.target_task == task and r.sparsity == float(sparsity)
                    and r.mask_source == mask_label(task, r.seed, st)
                    and r.weight_source == rewind_weight_source(task, r.seed, st))
        rows.append(f"rewind-{_fmt(frac)}")
        cells.append([idx.stat_cell(pred, seeds, f"rewind {frac} on {task}",
                                    full=full_vals, criterion=criterion)])

    def std_pred(r):
        return (r.target_task == task and r.sparsity == float(sparsity)
                and r.mask_source == f"standard:{task}:s{r.seed}"
                and r.weight_source == "theta-t")
    rows.append("standard")
    cells.append([idx.stat_cell(std_pred, seeds, f"standard pruning on {task}",
                                full=full_vals, criterion=criterion)])
    return Table(kind="rewind", title=f"{task}: rewind sweep at sparsity {_fmt(sparsity)}",
                 row_labels=tuple(rows), col_labels=("metric",), cells=cells,
                 notes=(f"rewind fractions map to steps {steps} of {task_steps}",
                        f"verdict criterion: {criterion}", f"seeds: {list(seeds)}"))


def universality_table(records, fingerprint: str, targets, grid, seeds, mask_seed: int,
                       criterion: str = "one-stddev", mlm_task: str = "mlm") -> Table:
    """Per target: its winning sparsity, own-mask vs MLM-mask means, gap, verdict."""
    idx = RecordIndex(records, fingerprint)
    targets, seeds = tuple(targets), tuple(seeds)
    cols = ("winning-sparsity", "own", "mlm", "gap")
    rows, cells, notes = [], [], []
    for t in targets:
        s_t = winning_sparsity(idx.current, t, grid, seeds, criterion)
        full_vals, _ = idx.metrics(_dense(t), seeds, f"full model on {t}")
        rows.append(t)
        if s_t == 0.0:
            fm = float(np.mean(full_vals))
            cells.append([Cell(value=0.0), Cell(value=fm), Cell(value=fm),
                          Cell(value=0.0)])
            notes.append(f"{t}: winning sparsity 0 -> trivially universal (full model)")
            continue
        own = idx.stat_cell(_variant(t, s_t, "imp"), seeds, f"own mask on {t} at {s_t}")
        mlm = idx.stat_cell(_transfer_cell(mlm_task, t, s_t, mask_seed), seeds,
                            f"{mlm_task} mask on {t} at {s_t}",
                            full=full_vals, criterion=criterion)
        cells.append([Cell(value=float(s_t)), own, mlm,
                      Cell(value=own.value - mlm.value,
                           records=own.records + mlm.records)])
    return Table(kind="universality", title="shared-mask universality by target",
                 row_labels=tuple(rows), col_labels=cols, cells=cells,
                 notes=tuple(notes) + (f"verdict criterion: {criterion} "
                                       f"(MLM-mask cell vs the target's full model)",
                                       f"mask trajectory seed: {mask_seed}",
                                       f"seeds: {list(seeds)}"))


def transfer_matrix_table(records, fingerprint: str, sources, targets, sparsity: float,
                          mask_seed: int, seeds, criterion: str = "one-stddev") -> Table:
    """Absolute transfer metrics; a cell's verdict checks it against the
    target's full model (the dark-cell rule). Final column counts targets
    where the row transfers at least as well as the same-task mask."""
    idx = RecordIndex(records, fingerprint)
    sources, targets, seeds = tuple(sources), tuple(targets), tuple(seeds)
    full: dict[str, list[float]] = {}
    for t in targets:
        full[t], _ = idx.metrics(_dense(t), seeds, f"full model on {t}")
    grid_cells: dict[tuple[str, str], Cell] = {}
    for s in sources:
        for t in targets:
            grid_cells[s, t] = idx.stat_cell(
                _transfer_cell(s, t, sparsity, mask_seed), seeds,
                f"transfer cell ({s},{t})", full=full[t], criterion=criterion)
    same = {t: grid_cells[t, t] if t in sources else
            idx.stat_cell(_transfer_cell(t, t, sparsity, mask_seed), seeds,
                          f"same-task cell ({t},{t})")
            for t in targets}
    rows, cells = [], []
    for s in sources:
        rows.append(s)
        line = [grid_cells[s, t] for t in targets]
        wins = sum(1 for t in targets if grid_cells[s, t].value >= same[t].value)
        line.append(Cell(value=float(wins)))
        cells.append(line)
    return Table(kind="transfer-matrix",
                 title=f"transfer matrix at sparsity {_fmt(sparsity)}",
                 row_labels=tuple(rows), col_labels=targets + ("wins",), cells=cells,
                 notes=("verdict (dark cell): transferred subnetwork passes the "
                        f"{criterion} check against the target's full model",
                        "wins: targets where the row >= the same-task cell",
                        f"mask trajectory seed: {mask_seed}", f"seeds: {list(seeds)}"))


def transfer_diff_table(records, fingerprint: str, sources, targets, sparsity: float,
                        mask_seed: int, seeds) -> Table:
    """Transfer minus same-task performance; the diagonal is exactly zero."""
    idx = RecordIndex(records, fingerprint)
    sources, targets, seeds = tuple(sources), tuple(targets), tuple(seeds)
    same: dict[str, Cell] = {}
    for t in targets:
        same[t] = idx.stat_cell(_transfer_cell(t, t, sparsity, mask_seed), seeds,
                                f"same-task cell ({t},{t})")
    rows, cells = [], []
    for s in sources:
        rows.append(s)
        line = []
        for t in targets:
            if s == t:
                line.append(Cell(value=0.0, n=same[t].n, records=same[t].records))
                continue
            cell = idx.stat_cell(_transfer_cell(s, t, sparsity, mask_seed), seeds,
                                 f"transfer cell ({s},{t})")
            line.append(Cell(value=cell.value - same[t].value, std=cell.std, n=cell.n,
                             records=cell.records + same[t].records))
        cells.append(line)
    return Table(kind="transfer-diff",
                 title=f"transfer minus same-task at sparsity {_fmt(sparsity)}",
                 row_labels=tuple(rows), col_labels=targets, cells=cells,
                 notes=("cell = Transfer(S,T) - Transfer(T,T); diagonal exactly 0",
                        f"mask trajectory seed: {mask_seed}", f"seeds: {list(seeds)}"))


def rewound_transfer_table(records, fingerprint: str, source: str, fractions, targets,
                           sparsity: float, mask_seed: int, seeds,
                           task_steps: int) -> Table:
    """Transfer of rewound masks+weights, relative to the rewind-to-θ0 row."""
    idx = RecordIndex(records, fingerprint)
    targets, seeds = tuple(targets), tuple(seeds)
    steps = rewind_steps(tuple(fractions), task_steps)

    def row_cells(mask_source_for, weight_source_for, what: str) -> list[Cell]:
        out = []
        for t in targets:
            def pred(r, t=t):
                return (r.target_task == t and r.sparsity == float(sparsity)
                        and r.mask_source == mask_source_for
                        and r.weight_source == weight_source_for)
            out.append(idx.stat_cell(pred, seeds, f"{what} -> {t}"))
        return out

    base = row_cells(mask_label(source, mask_seed, 0),
                     rewind_weight_source(source, mask_seed, 0), "rewind i=0")
    rows, cells = [], []
    for frac, st in zip(fractions, steps):
        rows.append(f"rewind-{_fmt(frac)}")
        line = row_cells(mask_label(source, mask_seed, st),
                         rewind_weight_source(source, mask_seed, st), f"rewind i={st}")
        cells.append([Cell(value=c.value - b.value, std=c.std, n=c.n,
                           records=c.records + b.records)
                      for c, b in zip(line, base)])
    rows.append("standard")
    line = row_cells(f"standard:{source}:s{mask_seed}",
                     f"standard-final:{source}:s{mask_seed}", "standard pruning")
    cells.append([Cell(value=c.value - b.value, std=c.std, n=c.n,
                       records=c.records + b.records)
                  for c, b in zip(line, base)])
    return Table(kind="rewound-transfer",
                 title=f"{source}: rewound-source transfer at sparsity {_fmt(sparsity)}, "
                       "relative to rewinding to the pre-trained weights",
                 row_labels=tuple(rows), col_labels=targets, cells=cells,
                 notes=(f"rewind fractions map to steps {steps} of {task_steps}",
                        "values are relative to the fraction-0 row, which is exactly 0",
                        f"mask trajectory seed: {mask_seed}", f"seeds: {list(seeds)}"))


def overlap_table(labels, matrix: np.ndarray, sparsity: float,
                  mask_paths: tuple[str, ...] = ()) -> Table:
    labels = tuple(labels)
    cells = [[Cell(value=float(matrix[i, j])) for j in range(len(labels))]
             for i in range(len(labels))]
    return Table(kind="overlap", title=f"mask overlap at sparsity {_fmt(sparsity)}",
                 row_labels=labels, col_labels=labels, cells=cells,
                 notes=("cell = |pruned(A) & pruned(B)| / |pruned(A) | pruned(B)|",)
                 + tuple(f"mask: {p}" for p in mask_paths))


def load_overlap_masks(root: Path, model, tasks, sparsity: float, mask_seed: int):
    """Cached final IMP masks for the overlap report; read-only, refuses unlabeled."""
    paths, masks = [], []
    for t in tasks:
        p = (root / "masks" / "imp" / t / f"seed{mask_seed}" / "i00000"
             / f"target-{sparsity_tag(sparsity)}.mask")
        if not p.exists():
            raise StateError(f"no cached mask for {t} at sparsity {sparsity} ({p}); "
                             "run the imp or overlap command first")
        m = load_mask(p, model)
        if "op" not in m.meta:
            raise StateError(f"{p} has no provenance metadata; refusing to report on it")
        paths.append(str(p))
        masks.append(m)
    return masks, tuple(paths)


def build_report(kind: str, config: dict, preset, records, fingerprint: str,
                 out_root: Path) -> Table:
    """Dispatch a report kind to its builder, filling defaults from the preset."""
    if kind not in REPORT_KINDS:
        raise ConfigError(f"unknown report kind {kind!r}; "
                          f"expected one of {', '.join(REPORT_KINDS)}")
    seeds = tuple(int(s) for s in config.get("seeds", preset.seeds))
    tasks = tuple(config.get("tasks", TASK_IDS))
    grid = tuple(float(s) for s in config.get("sparsity_grid", preset.sparsity_grid))
    sparsity = float(config.get("sparsity", preset.sparsity))
    fractions = tuple(float(f) for f in
                      config.get("rewind_fractions", preset.rewind_fractions))
    mask_seed = int(config.get("mask_seed", seeds[0]))
    report_cfg = config.get("report") or {}
    criterion = report_cfg.get("criterion") or config.get("criterion", "one-stddev")
    source = config.get("source")

    if kind == "variants":
        return variants_table(records, fingerprint, tasks, grid, seeds, criterion)
    if kind == "sparsity-curve":
        return sparsity_curve_table(records, fingerprint, source or tasks[0], grid,
                                    seeds, criterion)
    if kind == "rewind":
        if not source:
            raise ConfigError("report kind 'rewind' needs a source task "
                              "(set 'source' in the config)")
        return rewind_table(records, fingerprint, source, fractions, sparsity, seeds,
                            preset.task_steps, criterion)
    if kind == "universality":
        targets = tuple(config.get("targets", [t for t in tasks if t != "mlm"]))
        return universality_table(records, fingerprint, targets, grid, seeds,
                                  mask_seed, criterion)
    if kind == "transfer-matrix":
        targets = tuple(config.get("targets", tasks))
        return transfer_matrix_table(records, fingerprint, tasks, targets, sparsity,
                                     mask_seed, seeds, criterion)
    if kind == "transfer-diff":
        targets = tuple(config.get("targets", tasks))
        return transfer_diff_table(records, fingerprint, tasks, targets, sparsity,
                                   mask_seed, seeds)
    if kind == "rewound-transfer":
        if not source:
            raise ConfigError("report kind 'rewound-transfer' needs a source task "
                              "(set 'source' in the config)")
        targets = tuple(config.get("targets", tasks))
        return rewound_transfer_table(records, fingerprint, source, fractions, targets,
                                      sparsity, mask_seed, seeds, preset.task_steps)
    masks, paths = load_overlap_masks(out_root, preset.model, tasks, sparsity,
                                      mask_seed)
    study = overlap_study(masks, labels=list(tasks))
    return overlap_table(study.labels, study.matrix, sparsity, paths)


# -- renderers ---------------------------------------------------------------

def _verdict_str(v: bool | None) -> str:
    return "" if v is None else ("pass" if v else "fail")


def to_csv(table: Table) -> str:
    """One row per populated cell; floats rendered with repr for byte identity."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["row", "col", "value", "std", "n", "verdict"])
    for i, row in enumerate(table.row_labels):
        for j, col in enumerate(table.col_labels):
            c = table.cells[i][j]
            if c.value is None:
                continue
            w.writerow([row, col, repr(float(c.value)),
                        "" if c.std is None else repr(float(c.std)),
                        c.n or "", _verdict_str(c.verdict)])
    return buf.getvalue()


def to_text(table: Table) -> str:
    def show(c: Cell) -> str:
        if c.value is None:
            return "."
        s = f"{c.value:.4f}"
        if c.std is not None and c.n > 1:
            s += f"±{c.std:.4f}"
        if c.verdict is not None:
            s += "*" if c.verdict else "!"
        return s

    grid = [[""] + list(table.col_labels)]
    for i, row in enumerate(table.row_labels):
        grid.append([row] + [show(c) for c in table.cells[i]])
    widths = [max(len(r[j]) for r in grid) for j in range(len(grid[0]))]
    lines = [table.title]
    for r in grid:
        lines.append("  ".join(cell.rjust(w) for cell, w in zip(r, widths)))
    for note in table.notes:
        lines.append(f"note: {note}")
    lines.append("legend: * verdict pass, ! verdict fail, . no data")
    return "\n".join(lines) + "\n"


CELL_W, CELL_H, PAD = 86, 30, 6


def to_svg(table: Table) -> str:
    values = [c.value for row in table.cells for c in row
              if c.value is not None and np.isfinite(c.value)]
    vmin = min(values) if values else 0.0
    vmax = max(values) if values else 1.0

    def gray(v: float) -> int:
        if vmax == vmin:
            span = 0.5
        else:
            span = (v - vmin) / (vmax - vmin)
        return 245 - round(span * 205)

    left = PAD * 2 + 8 * max((len(r) for r in table.row_labels), default=1)
    top = PAD * 2 + 14
    width = left + CELL_W * len(table.col_labels) + PAD
    height = top + CELL_H * len(table.row_labels) + PAD + 14 * (len(table.notes) + 1)
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="monospace" font-size="11">',
           "<desc>Monotone grayscale: the minimum cell value "
           f"({vmin:.6g}) fills rgb(245,245,245) and the maximum ({vmax:.6g}) fills "
           "rgb(40,40,40), linear in between. Cells with a thick outline pass the "
           "winning-ticket verdict recorded in the table notes.</desc>",
           f'<text x="{PAD}" y="{PAD + 10}">{_esc(table.title)}</text>']
    for j, col in enumerate(table.col_labels):
        out.append(f'<text x="{left + j * CELL_W + 4}" y="{top - 4}">{_esc(col)}</text>')
    for i, row in enumerate(table.row_labels):
        y = top + i * CELL_H
        out.append(f'<text x="{PAD}" y="{y + CELL_H - 11}">{_esc(row)}</text>')
        for j, _ in enumerate(table.col_labels):
            c = table.cells[i][j]
            x = left + j * CELL_W
            if c.value is None:
                out.append(f'<rect x="{x}" y="{y}" width="{CELL_W - 2}" '
                           f'height="{CELL_H - 2}" fill="white" stroke="#bbb" '
                           'stroke-dasharray="3,3"/>')
                continue
            g = gray(c.value)
            stroke = '#000" stroke-width="3' if c.verdict else '#999" stroke-width="1'
            out.append(f'<rect x="{x}" y="{y}" width="{CELL_W - 2}" '
                       f'height="{CELL_H - 2}" fill="rgb({g},{g},{g})" '
                       f'stroke="{stroke}"/>')
            fill = "#000" if g > 140 else "#fff"
            out.append(f'<text x="{x + 4}" y="{y + CELL_H - 11}" fill="{fill}">'
                       f"{c.value:.3f}</text>")
    base = top + CELL_H * len(table.row_labels) + 14
    for k, note in enumerate(table.notes):
        out.append(f'<text x="{PAD}" y="{base + 14 * k}">{_esc(note)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def trace_lines(table: Table) -> list[str]:
    """--trace output: the record ids contributing to each populated cell."""
    lines = []
    for i, row in enumerate(table.row_labels):
        for j, col in enumerate(table.col_labels):
            c = table.cells[i][j]
            if c.value is None:
                continue
            ids = " ".join(c.records) if c.records else "(derived, no records)"
            lines.append(f"{row} | {col}: {ids}")
    return lines


FORMATS = {"csv": (to_csv, ".csv"), "svg": (to_svg, ".svg"), "text": (to_text, ".txt")}


def write_report(table: Table, out_dir: Path, fmt: str = "all") -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    fmts = tuple(FORMATS) if fmt == "all" else (fmt,)
    paths = []
    for f in fmts:
        render, ext = FORMATS[f]
        path = out_dir / f"{table.kind}{ext}"
        path.write_text(render(table), encoding="utf-8")
        paths.append(path)
    return paths
