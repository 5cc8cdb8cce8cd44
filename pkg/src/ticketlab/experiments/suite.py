"""The toy experiment suite: fixture constants and cached artifacts.

A suite bundles one generated corpus, the four derived tasks (masked
token prediction, dominant-state classification, same-chain pair
classification, state-fraction regression), a randomly initialized
backbone, and the backbone after masked-token pre-training. Everything
is derived deterministically from a named preset, so two builds of the
same preset agree bit-for-bit.

Artifacts live under one root::

    root/
      data/generator.json, corpus.tsv, vocab.txt
      checkpoints/init.ckpt        randomly initialized backbone
      checkpoints/pretrained.ckpt  backbone after pre-training
      dense/, masks/               written by the drivers
      records.jsonl                evaluation run records

The corpus TSV is an export for inspection and byte-level determinism
checks; the pipeline regenerates the corpus in memory from
generator.json because the TSV does not carry the hidden-state and
chain annotations the derivation rules need.

The ``toy`` preset is the frozen fixture for the qualitative
winning-ticket and transfer checks; ``ci`` is a reduced fixture for
smoke runs.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import ConfigError, StateError
from ..hashing import fingerprint_hex, seed_from
from ..masking import Mask
from ..tasks import Dataset, GeneratorSpec, Task, derive_task, gen_corpus, save_dataset
from ..training import Checkpoint, TrainConfig, load_checkpoint, run_fingerprint, save_checkpoint, train
from ..transformer import ModelConfig, Parameterization, attach_head, init_params
from ..numerics import Tensor, dtype_name
from .records import RecordStore

# task id -> (head kind, derivation rule)
TASK_DEFS: tuple[tuple[str, str, str], ...] = (
    ("mlm", "mlm", "mlm"),
    ("dominant-state", "single-class", "dominant-hidden-state"),
    ("same-chain", "pair-class", "same-chain"),
    ("state-fraction", "regression", "state-fraction"),
)
TASK_IDS = tuple(t[0] for t in TASK_DEFS)


@dataclass(frozen=True)
class SuitePreset:
    name: str
    gen: GeneratorSpec
    corpus_size: int
    model: ModelConfig
    pretrain_steps: int
    pretrain_lr: float
    pretrain_batch: int
    task_steps: int
    task_lr: float
    task_batch: int
    weight_decay: float = 0.01
    master_seed: int = 7
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    sparsity: float = 0.6
    sparsity_grid: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
    rewind_fractions: tuple[float, ...] = (0.0, 0.05, 0.1, 0.2, 0.5)
    prune_fraction: float = 0.1
    eval_batch: int = 64

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["gen"] = self.gen.to_dict()
        d["model"] = self.model.to_dict()
        for k in ("seeds", "sparsity_grid", "rewind_fractions"):
            d[k] = list(d[k])
        return d


    def pretrain_config(self) -> TrainConfig:
        return TrainConfig(total_steps=self.pretrain_steps, learning_rate=self.pretrain_lr,
                           batch_size=self.pretrain_batch, weight_decay=self.weight_decay,
                           seed=seed_from(self.master_seed, "pretrain"))

    def task_config(self, seed: int, steps: int | None = None) -> TrainConfig:
        return TrainConfig(total_steps=self.task_steps if steps is None else steps,
                           learning_rate=self.task_lr, batch_size=self.task_batch,
                           weight_decay=self.weight_decay, seed=int(seed))


PRESETS: dict[str, SuitePreset] = {
    "toy": SuitePreset(
        name="toy",
        gen=GeneratorSpec(num_states=8, vocab_size=64, min_len=16, max_len=24,
                          transition_alpha=1.0, emission_alpha=0.12, num_chains=2,
                          eval_fraction=0.2, seed=101),
        corpus_size=2400,
        model=ModelConfig(num_blocks=2, hidden_size=32, num_heads=2,
                          vocab_size=64, max_seq_len=64),
        pretrain_steps=2000, pretrain_lr=1e-3, pretrain_batch=32,
        task_steps=400, task_lr=1e-3, task_batch=32,
        seeds=(1, 2, 3, 4, 5),
        sparsity=0.6,
    ),
    "ci": SuitePreset(
        name="ci",
        gen=GeneratorSpec(num_states=8, vocab_size=64, min_len=12, max_len=18,
                          transition_alpha=1.0, emission_alpha=0.12, num_chains=2,
                          eval_fraction=0.2, seed=101),
        corpus_size=500,
        model=ModelConfig(num_blocks=2, hidden_size=32, num_heads=2,
                          vocab_size=64, max_seq_len=64),
        pretrain_steps=200, pretrain_lr=1e-3, pretrain_batch=16,
        task_steps=80, task_lr=1e-3, task_batch=16,
        seeds=(1, 2),
        sparsity=0.4,
        sparsity_grid=(0.2, 0.4, 0.6),
    ),
}


def get_preset(name: str) -> SuitePreset:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    return PRESETS[name]


def suite_fingerprint(preset: SuitePreset) -> str:
    """Identity of every artifact a preset produces under the active dtype.

    dtype is included so f32 and f64 runs never dedupe against each
    other; selection arguments (seeds, grids) deliberately are not.
    """
    return fingerprint_hex({"preset": preset.to_dict(), "dtype": dtype_name()})


def build_tasks(preset: SuitePreset, corpus: Dataset) -> dict[str, Task]:
    tasks: dict[str, Task] = {}
    for task_id, kind, rule in TASK_DEFS:
        tasks[task_id] = derive_task(
            corpus, kind, rule, seed=seed_from(preset.master_seed, f"task/{task_id}"),
            task_id=task_id, train_steps=preset.task_steps,
            max_seq_len=preset.model.max_seq_len,
        )
    return tasks


@dataclass
class Suite:
    preset: SuitePreset
    root: Path
    corpus: Dataset
    tasks: dict[str, Task]
    init_ckpt: Checkpoint
    pretrained_ckpt: Checkpoint
    store: RecordStore

    @property
    def fingerprint(self) -> str:
        return suite_fingerprint(self.preset)

    @property
    def model(self) -> ModelConfig:
        return self.preset.model

    def task(self, task_id: str) -> Task:
        if task_id not in self.tasks:
            raise ConfigError(f"unknown task {task_id!r}; suite has {sorted(self.tasks)}")
        return self.tasks[task_id]

    def head_seed(self, task_id: str, seed: int) -> int:
        """One fixed head initialization per (task, run seed), shared by all variants."""
        return seed_from(self.preset.master_seed, f"head/{task_id}/{seed}")

    def backbone_params(self, weights: dict) -> Parameterization:
        tensors = {n: Tensor(a.copy(), requires_grad=True, name=n) for n, a in weights.items()}
        return Parameterization(config=self.model, backbone=tensors)

    def theta0(self) -> Parameterization:
        return self.backbone_params(self.pretrained_ckpt.theta())

    def theta0_prime(self) -> Parameterization:
        """The raw random initialization the pre-training started from."""
        return self.backbone_params(self.init_ckpt.theta())

    def dense_mask(self) -> Mask:
        return Mask.ones(self.model)

    # path helpers; drivers create directories on demand
    def dense_dir(self, task_id: str) -> Path:
        return self.root / "dense" / task_id

    def mask_dir(self, source: str, task_id: str, seed: int) -> Path:
        return self.root / "masks" / source / task_id / f"seed{seed}"


def _pretrain(preset: SuitePreset, tasks: dict[str, Task]) -> tuple[Checkpoint, Checkpoint]:
    task = tasks["mlm"]
    base = init_params(preset.model, seed=seed_from(preset.master_seed, "backbone-init"))
    params = attach_head(base, task.spec.head, seed=seed_from(preset.master_seed, "pretrain-head"))
    cfg = preset.pretrain_config()
    result = train(params, task.spec.head, Mask.ones(preset.model), task, cfg,
                   checkpoint_steps=(0, cfg.total_steps), rng_namespace="pretrain",
                   eval_batch_size=preset.eval_batch)
    return result.checkpoints[0], result.checkpoints[cfg.total_steps]


def expected_pretrain_fingerprint(preset: SuitePreset, tasks: dict[str, Task]) -> bytes:
    task = tasks["mlm"]
    return run_fingerprint(preset.model, task.spec.head, preset.pretrain_config(),
                           task, "pretrain")


def generate_data(preset: SuitePreset, root: str | Path) -> Dataset:
    """Generate the corpus and export data files; verifies an existing setup.

    Returns the in-memory corpus with hidden-state annotations intact.
    """
    root = Path(root)
    data_dir = root / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    spec_path = data_dir / "generator.json"
    payload = {"generator": preset.gen.to_dict(), "corpus_size": preset.corpus_size,
               "fingerprint": fingerprint_hex({"generator": preset.gen.to_dict(),
                                               "corpus_size": preset.corpus_size})}
    if spec_path.exists():
        existing = json.loads(spec_path.read_text())
        if existing.get("fingerprint") != payload["fingerprint"]:
            raise StateError(
                f"{spec_path} was produced by a different generator config; "
                "refusing to overwrite (use a fresh output directory)"
            )
    corpus = gen_corpus(preset.gen, preset.corpus_size)
    if not spec_path.exists():
        spec_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    corpus_path = data_dir / "corpus.tsv"
    if not corpus_path.exists():
        save_dataset(corpus_path, corpus)
        corpus.vocab.save(data_dir / "vocab.txt")
    return corpus


def build_suite(root: str | Path, preset: SuitePreset | str, *,
                eval_batch: int | None = None) -> Suite:
    """Assemble (and cache) the full suite under ``root``.

    Re-running over an existing root reuses its artifacts after checking
    they came from the same preset; a mismatch is an error rather than a
    silent rebuild.
    """
    if isinstance(preset, str):
        preset = get_preset(preset)
    if eval_batch is not None:
        preset = dataclasses.replace(preset, eval_batch=eval_batch)
    root = Path(root)
    corpus = generate_data(preset, root)
    tasks = build_tasks(preset, corpus)

    ckpt_dir = root / "checkpoints"
    ckpt_dir.mkdir(parents=True, exist_ok=True)
    init_path = ckpt_dir / "init.ckpt"
    pre_path = ckpt_dir / "pretrained.ckpt"
    expect = expected_pretrain_fingerprint(preset, tasks)
    if init_path.exists() and pre_path.exists():
        init_ckpt = load_checkpoint(init_path, expect_fingerprint=expect)
        pre_ckpt = load_checkpoint(pre_path, expect_fingerprint=expect)
        if pre_ckpt.step != preset.pretrain_steps:
            raise StateError(f"{pre_path} is at step {pre_ckpt.step}, "
                             f"expected {preset.pretrain_steps}")
    else:
        init_ckpt, pre_ckpt = _pretrain(preset, tasks)
        save_checkpoint(init_path, init_ckpt)
        save_checkpoint(pre_path, pre_ckpt)

    return Suite(preset=preset, root=root, corpus=corpus, tasks=tasks,
                 init_ckpt=init_ckpt, pretrained_ckpt=pre_ckpt,
                 store=RecordStore(root / "records.jsonl"))
