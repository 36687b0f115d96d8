"""Training, evaluation and the experiment drivers built on them."""
from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import engine as E
from .cnf import CnfFormula, eval_assignment, read_dimacs
from .dla import run_dla
from .engine import ParamStore, Tape
from .generator import DatasetManifest, derive_seed, load_manifest
from .graphs import batch_graphs, build_graph
from .model import Checkpoint, ModelConfig, forward, init_model, predict_assignment, save_checkpoint
from .solver import LabelRecord, load_labels

log = logging.getLogger(__name__)

# hyperparameters of the full-size setting; the TrainConfig defaults are desk scale except lr and wd
FULL_SCALE = {"d": 128, "T": 20, "node_cap": 20_000, "lr": 2e-5, "wd": 1e-10, "epochs": 150}


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class LabeledInstance:
    path: str
    formula: CnfFormula
    label: LabelRecord

    @property
    def num_vars(self) -> int:
        return self.formula.num_vars


@dataclass
class Dataset:
    manifest: DatasetManifest
    instances: dict[str, list[LabeledInstance]]  # by split

    @property
    def name(self) -> str:
        return self.manifest.spec.name

    def split(self, name: str) -> list[LabeledInstance]:
        if name == "all":
            return [i for s in ("train", "val", "test") for i in self.instances.get(s, [])]
        return self.instances.get(name, [])


def load_dataset(manifest) -> Dataset:
    """Read a labeled dataset (manifest plus ``labels.txt``)."""
    if not isinstance(manifest, DatasetManifest):
        manifest = load_manifest(manifest)
    labels_path = manifest.root / "labels.txt"
    if not labels_path.exists():
        raise FileNotFoundError(f"{manifest.root} is not labeled; run the label step first")
    labels = load_labels(labels_path)
    by_split: dict[str, list[LabeledInstance]] = {"train": [], "val": [], "test": []}
    for entry in manifest.entries:
        if entry.path not in labels:
            raise ValueError(f"instance {entry.path} has no label")
        formula = read_dimacs(manifest.instance_path(entry))
        label = labels[entry.path]
        if len(label.witness) != formula.num_vars:
            raise ValueError(f"label of {entry.path} has {len(label.witness)} bits for n={formula.num_vars}")
        by_split[entry.split].append(LabeledInstance(entry.path, formula, label))
    return Dataset(manifest, by_split)


# ---- metrics ------------------------------------------------------------------

@dataclass(frozen=True)
class InstanceMetrics:
    path: str
    optimum: int
    satisfied: int
    correct_vars: int
    num_vars: int

    @property
    def gap(self) -> int:
        return self.optimum - self.satisfied

    @property
    def ratio(self) -> float:
        return self.satisfied / self.optimum

    @property
    def accuracy(self) -> float:
        return self.correct_vars / self.num_vars


@dataclass
class EvalMetrics:
    records: list[InstanceMetrics]

    @property
    def gap(self) -> float:
        return float(np.mean([r.gap for r in self.records]))

    @property
    def ratio(self) -> float:
        return float(np.mean([r.ratio for r in self.records]))

    @property
    def accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.records]))

    def cell(self) -> str:
        """Gap (ratio) / accuracy, e.g. ``0.86 (99.8%) / 91.9%``."""
        return f"{self.gap:.2f} ({100 * self.ratio:.1f}%) / {100 * self.accuracy:.1f}%"

    def summary(self) -> dict:
        return {"gap": self.gap, "ratio": self.ratio, "accuracy": self.accuracy, "instances": len(self.records)}


def score(instance: LabeledInstance, assignment: Sequence[bool]) -> InstanceMetrics:
    sat = eval_assignment(instance.formula, assignment).satisfied
    correct = sum(bool(a) == b for a, b in zip(assignment, instance.label.witness))
    return InstanceMetrics(instance.path, instance.label.optimum, sat, correct, instance.num_vars)


# ---- batching -----------------------------------------------------------------

def pack_batches(sizes: Sequence[int], order: Iterable[int], node_cap: int) -> list[list[int]]:
    """Greedily fill batches in ``order`` while the node total stays within ``node_cap``.

    An instance larger than the cap gets a batch of its own.
    """
    batches, current, nodes = [], [], 0
    for i in order:
        if current and nodes + sizes[i] > node_cap:
            batches.append(current)
            current, nodes = [], 0
        current.append(i)
        nodes += sizes[i]
    if current:
        batches.append(current)
    return batches


class GraphCache:
    def __init__(self, kind: str):
        self.kind = kind
        self._graphs: dict[int, object] = {}

    def get(self, instance: LabeledInstance):
        key = id(instance)
        g = self._graphs.get(key)
        if g is None:
            g = self._graphs[key] = build_graph(instance.formula, self.kind)
        return g


def predict(instances: Sequence[LabeledInstance], params: ParamStore, config: ModelConfig,
            seed: int = 0, node_cap: int = 4000, cache: GraphCache | None = None) -> list[tuple[bool, ...]]:
    """Decoded assignments; instance ``i`` starts from init seed ``derive_seed(seed, i)``."""
    cache = cache or GraphCache(config.kind)
    graphs = [cache.get(inst) for inst in instances]
    out: list[tuple[bool, ...]] = [()] * len(instances)
    for batch in pack_batches([g.num_nodes for g in graphs], range(len(instances)), node_cap):
        bg = batch_graphs([graphs[i] for i in batch])
        tape = Tape()
        logits = forward(bg, tape.bind(params.params), config, [derive_seed(seed, i) for i in batch])
        flat = logits.value[:, 0]
        for i, sl in zip(batch, bg.var_slices()):
            out[i] = predict_assignment(flat[sl])
    return out


def evaluate(ckpt: Checkpoint, dataset: Dataset | str | Path, split: str = "test", seed: int = 0,
             node_cap: int = 4000) -> EvalMetrics:
    """Gap, ratio and accuracy of a model's decoded assignments.

    The dataset may have a different clause width than the training data.
    """
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    instances = dataset.split(split)
    if not instances:
        raise ValueError(f"split {split!r} of {dataset.name} is empty")
    preds = predict(instances, ckpt.params, ckpt.config, seed, node_cap)
    return EvalMetrics([score(inst, a) for inst, a in zip(instances, preds)])


BASELINES = ("dla", "all-true", "random")


def baseline_eval(dataset: Dataset | str | Path, baseline: str, split: str = "test", seed: int = 0) -> EvalMetrics:
    if not isinstance(dataset, Dataset):
        dataset = load_dataset(dataset)
    instances = dataset.split(split)
    if baseline == "dla":
        preds = [run_dla(inst.formula) for inst in instances]
    elif baseline == "all-true":
        preds = [(True,) * inst.num_vars for inst in instances]
    elif baseline == "random":
        rng = np.random.default_rng(seed)
        preds = [tuple(bool(b) for b in rng.integers(0, 2, inst.num_vars)) for inst in instances]
    else:
        raise ValueError(f"unknown baseline {baseline!r}; choose from {BASELINES}")
    return EvalMetrics([score(inst, a) for inst, a in zip(instances, preds)])


# ---- training -------------------------------------------------------------------

@dataclass
class TrainConfig:
    manifest: str
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 2e-5
    wd: float = 1e-10
    epochs: int = 150
    node_cap: int = 4000
    seed: int = 0
    eval_seed: int = 0
    out_dir: str | None = None

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if not self.lr > 0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.node_cap < 1:
            raise ValueError("node cap must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class TrainResult:
    checkpoint: Checkpoint  # best on validation
    final: Checkpoint
    log: list[dict]
    best_epoch: int


def _batch_loss(tape: Tape, batch: list[LabeledInstance], graphs, params, config: ModelConfig, seeds):
    bg = batch_graphs(graphs)
    logits = forward(bg, params, config, seeds)
    y = np.concatenate([np.asarray(inst.label.witness, dtype=np.float64) for inst in batch])
    # mean over variables within an instance, then over the instances in the batch
    w = np.concatenate([np.full(inst.num_vars, 1.0 / (inst.num_vars * len(batch))) for inst in batch])
    return E.bce(E.sigmoid(logits), y, w)


def train(config: TrainConfig, dataset: Dataset | None = None, progress: bool = False) -> TrainResult:
    """Fit a model with Adam on per-variable BCE against the label witnesses.

    Each epoch shuffles the training split (seeded by ``seed`` and the epoch),
    packs batches under ``node_cap`` nodes, and evaluates on the validation
    split. Instance ``i`` of epoch ``e`` starts from init seed
    ``derive_seed(derive_seed(seed, e), i)``. The returned checkpoint is the
    epoch with the highest validation ratio (earliest on ties).
    """
    dataset = dataset or load_dataset(config.manifest)
    train_set = dataset.split("train")
    val_set = dataset.split("val") or train_set
    if not train_set:
        raise ValueError(f"{dataset.name} has an empty training split")
    mc = config.model
    params = init_model(mc)
    cache = GraphCache(mc.kind)
    graphs = [cache.get(inst) for inst in train_set]
    sizes = [g.num_nodes for g in graphs]
    out_dir = Path(config.out_dir) if config.out_dir else None
    if out_dir:
        out_dir.mkdir(parents=True, exist_ok=True)
    header = {"record": "config", **config.to_dict(), "dataset": dataset.name,
              "init_seed_rule": "derive_seed(derive_seed(seed, epoch), train_index)"}
    records: list[dict] = []
    best_ratio, best_epoch, best_params = -1.0, 0, None
    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        rng = np.random.default_rng([config.seed, epoch])
        epoch_seed = derive_seed(config.seed, epoch)
        losses, weights = [], []
        for batch in pack_batches(sizes, rng.permutation(len(train_set)), config.node_cap):
            tape = Tape()
            p = tape.bind(params.params)
            loss = _batch_loss(tape, [train_set[i] for i in batch], [graphs[i] for i in batch], p, mc,
                               [derive_seed(epoch_seed, i) for i in batch])
            value = float(loss.value[0, 0])
            if not np.isfinite(value):
                raise TrainingDiverged(f"non-finite loss at epoch {epoch}, batch of instances {batch[:5]}...")
            grads = tape.backward(loss)
            E.adam_step(params, grads, config.lr, config.wd)
            losses.append(value)
            weights.append(len(batch))
        preds = predict(val_set, params, mc, config.eval_seed, config.node_cap, cache)
        val = EvalMetrics([score(inst, a) for inst, a in zip(val_set, preds)])
        rec = {"epoch": epoch, "train_loss": float(np.average(losses, weights=weights)),
               "val_gap": val.gap, "val_ratio": val.ratio, "val_accuracy": val.accuracy}
        records.append(rec)
        if val.ratio > best_ratio:
            best_ratio, best_epoch, best_params = val.ratio, epoch, params.copy()
        msg = (f"epoch {epoch:3d} loss {rec['train_loss']:.4f} val gap {val.gap:.2f} "
               f"ratio {val.ratio:.4f} acc {val.accuracy:.3f} ({time.perf_counter() - t0:.1f}s)")
        log.info(msg)
        if progress:
            print(msg, flush=True)
    best = Checkpoint(mc, ParamStore(best_params.params))
    final = Checkpoint(mc, ParamStore({k: v.copy() for k, v in params.params.items()}))
    if out_dir:
        lines = [json.dumps(header, sort_keys=True)] + [json.dumps(r, sort_keys=True) for r in records]
        (out_dir / "train_log.jsonl").write_text("\n".join(lines) + "\n")
        save_checkpoint(best, out_dir / "best.ckpt")
        save_checkpoint(final, out_dir / "final.ckpt")
    return TrainResult(best, final, records, best_epoch)


# ---- experiment drivers --------------------------------------------------------

def layer_sweep(config: TrainConfig, T_list: Sequence[int], dataset: Dataset | None = None,
                split: str = "test") -> list[tuple[int, EvalMetrics]]:
    """Train one model per layer count, everything else equal; evaluate each."""
    dataset = dataset or load_dataset(config.manifest)
    rows = []
    for T in T_list:
        mc = ModelConfig(config.model.kind, config.model.d, T, config.model.param_seed)
        sub_dir = str(Path(config.out_dir) / f"T{T}") if config.out_dir else None
        cfg = TrainConfig(**{**config.to_dict(), "model": mc, "out_dir": sub_dir})
        result = train(cfg, dataset)
        rows.append((T, evaluate(result.checkpoint, dataset, split, config.eval_seed, config.node_cap)))
    return rows


def cross_eval(checkpoints: Sequence[tuple[str, Checkpoint]], datasets: Sequence[Dataset],
               split: str = "test", seed: int = 0) -> list[list[EvalMetrics]]:
    """Every checkpoint against every dataset: rows are checkpoints, columns datasets."""
    return [[evaluate(ckpt, ds, split, seed) for ds in datasets] for _, ckpt in checkpoints]


def format_sweep(rows: Sequence[tuple[int, EvalMetrics]]) -> str:
    lines = [f"{'T':>4}  {'gap':>7}  {'ratio':>7}  {'accuracy':>8}"]
    for T, m in rows:
        lines.append(f"{T:>4}  {m.gap:>7.2f}  {m.ratio:>7.4f}  {m.accuracy:>8.4f}")
    return "\n".join(lines) + "\n"


def sweep_tsv(rows: Sequence[tuple[int, EvalMetrics]]) -> str:
    lines = ["T\tgap\tratio\taccuracy"]
    lines += [f"{T}\t{m.gap:.6f}\t{m.ratio:.6f}\t{m.accuracy:.6f}" for T, m in rows]
    return "\n".join(lines) + "\n"


def format_grid(row_names: Sequence[str], col_names: Sequence[str], grid: Sequence[Sequence[EvalMetrics]]) -> str:
    """Train x test table; each cell shows ``gap (ratio)`` over ``accuracy``."""
    width = max(16, *(len(c) for c in col_names)) + 2
    first = max(12, *(len(r) for r in row_names)) + 2
    lines = ["Train \\ Test".ljust(first) + "".join(c.rjust(width) for c in col_names)]
    for name, row in zip(row_names, grid):
        top = "".join(f"{m.gap:.2f} ({100 * m.ratio:.1f}%)".rjust(width) for m in row)
        bottom = "".join(f"{100 * m.accuracy:.1f}%".rjust(width) for m in row)
        lines += [name.ljust(first) + top, "".ljust(first) + bottom]
    return "\n".join(lines) + "\n"


def grid_tsv(row_names, col_names, grid) -> str:
    lines = ["train\ttest\tgap\tratio\taccuracy"]
    for rn, row in zip(row_names, grid):
        for cn, m in zip(col_names, row):
            lines.append(f"{rn}\t{cn}\t{m.gap:.6f}\t{m.ratio:.6f}\t{m.accuracy:.6f}")
    return "\n".join(lines) + "\n"
