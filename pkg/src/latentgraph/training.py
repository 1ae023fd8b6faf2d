"""Mini-batch SGD training with LR decay and validation-AUROC model selection.

One run is fully determined by its seed: the seed roots both parameter
initialization (stream [seed, 0]) and the per-epoch shuffles
(stream [seed, 1, epoch]). The test split is evaluated exactly once, after
training, with the parameters of the best-validation-AUROC epoch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, TrainingError
from .graphs import SubjectGraph
from .metrics import EvalBatch, accuracy, auroc
from .models import Head, ModelConfig, build_head
from .nn import LrSchedule, lr_at_epoch


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    epochs: int = 300
    initial_lr: float = 0.001
    lr_decay: float = 0.995
    weight_decay: float = 0.1
    seeds: tuple = (0, 1, 2)

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if self.initial_lr <= 0 or not 0 < self.lr_decay <= 1 or self.weight_decay < 0:
            raise ConfigError("invalid optimizer hyperparameters")
        if not self.seeds:
            raise ConfigError("at least one seed is required")

    def schedule(self) -> LrSchedule:
        return LrSchedule(self.initial_lr, self.lr_decay)


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_auroc: float

    def to_json_dict(self) -> dict:
        return {"epoch": self.epoch, "lr": self.lr,
                "train_loss": self.train_loss, "val_auroc": self.val_auroc}


@dataclass
class RunResult:
    best_epoch: int
    val_auroc_at_best: float
    test_auroc: float
    test_acc: float
    wall_clock_minutes: float
    seed: int
    diagnostic: str | None = None


@dataclass
class Splits:
    train: list[SubjectGraph]
    val: list[SubjectGraph]
    test: list[SubjectGraph]

    def validate(self):
        ids = [{g.subject_id for g in part} for part in (self.train, self.val, self.test)]
        for i in range(3):
            for j in range(i + 1, 3):
                overlap = ids[i] & ids[j]
                if overlap:
                    raise ConfigError(f"splits share subject ids: {sorted(overlap)[:5]}")
        if not self.train or not self.val or not self.test:
            raise ConfigError("all three splits must be non-empty")


def batch_iter(dataset: list, batch_size: int, epoch_seed):
    """Deterministically shuffled batches covering the dataset exactly once.

    `epoch_seed` is any value np.random.default_rng accepts; the training loop
    passes [run_seed, 1, epoch]. The last partial batch is kept.
    """
    if not dataset:
        raise ConfigError("batch_iter over an empty dataset")
    order = np.random.default_rng(epoch_seed).permutation(len(dataset))
    for start in range(0, len(dataset), batch_size):
        yield [dataset[int(i)] for i in order[start:start + batch_size]]


def evaluate_head(head: Head, graphs: list[SubjectGraph]) -> EvalBatch:
    """Frozen forward over a split, returning softmax probs plus labels."""
    logits = np.vstack([head.forward(g).data for g in graphs])
    probs = nn.softmax_rows(logits)
    labels = np.array([g.label for g in graphs], dtype=np.int64)
    return EvalBatch(probs, labels)


def train(model_cfg: ModelConfig, train_cfg: TrainConfig, splits: Splits,
          seed: int) -> tuple[RunResult, list[EpochRecord], Head]:
    """One full training run.

    Returns the run result, the epoch history, and the head loaded with the
    best-validation-epoch parameters.
    """
    splits.validate()
    started = time.perf_counter()
    head = build_head(model_cfg, np.random.default_rng([seed, 0]))
    schedule = train_cfg.schedule()

    history: list[EpochRecord] = []
    best_state = head.state()
    best_epoch = -1
    best_val = -np.inf
    diagnostic = None

    for epoch in range(train_cfg.epochs):
        lr = lr_at_epoch(schedule, epoch)
        total_loss = 0.0
        try:
            for batch in batch_iter(splits.train, train_cfg.batch_size,
                                    [seed, 1, epoch]):
                logits = nn.vstack([head.forward(g) for g in batch])
                labels = np.array([g.label for g in batch], dtype=np.int64)
                loss = nn.cross_entropy(logits, labels)
                if not np.isfinite(loss.data):
                    raise TrainingError(f"non-finite training loss at epoch {epoch}")
                loss.backward()
                nn.sgd_step(head.params, lr, train_cfg.weight_decay)
                total_loss += float(loss.data) * len(batch)
        except TrainingError as exc:
            diagnostic = str(exc)
            break
        train_loss = total_loss / len(splits.train)
        val_auroc = auroc(evaluate_head(head, splits.val))
        history.append(EpochRecord(epoch, lr, train_loss, val_auroc))
        if val_auroc > best_val:   # strict: ties keep the earlier epoch
            best_val = val_auroc
            best_epoch = epoch
            best_state = head.state()

    head.load_state(best_state)
    test_batch = evaluate_head(head, splits.test)
    minutes = (time.perf_counter() - started) / 60.0
    result = RunResult(
        best_epoch=best_epoch,
        val_auroc_at_best=float(best_val) if np.isfinite(best_val) else 0.0,
        test_auroc=auroc(test_batch),
        test_acc=accuracy(test_batch),
        wall_clock_minutes=minutes,
        seed=seed,
        diagnostic=diagnostic,
    )
    return result, history, head


@dataclass
class AggregateResult:
    mean_auroc: float
    std_auroc: float
    mean_acc: float
    std_acc: float
    mean_minutes: float
    runs: list[RunResult] = field(default_factory=list)
    single_run: bool = False


def aggregate(runs: list[RunResult]) -> AggregateResult:
    """Mean and sample standard deviation (ddof=1) over per-seed results."""
    if not runs:
        raise ConfigError("no runs to aggregate")
    aurocs = np.array([r.test_auroc for r in runs])
    accs = np.array([r.test_acc for r in runs])
    minutes = np.array([r.wall_clock_minutes for r in runs])
    single = len(runs) == 1
    return AggregateResult(
        mean_auroc=float(aurocs.mean()),
        std_auroc=0.0 if single else float(aurocs.std(ddof=1)),
        mean_acc=float(accs.mean()),
        std_acc=0.0 if single else float(accs.std(ddof=1)),
        mean_minutes=float(minutes.mean()),
        runs=list(runs),
        single_run=single,
    )


def repeat_runs(model_cfg: ModelConfig, train_cfg: TrainConfig,
                splits: Splits) -> AggregateResult:
    """Run every configured seed and aggregate test metrics."""
    runs = [train(model_cfg, train_cfg, splits, seed)[0] for seed in train_cfg.seeds]
    return aggregate(runs)
