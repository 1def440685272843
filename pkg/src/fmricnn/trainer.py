"""Mini-batch SGD with momentum and a staircase learning-rate schedule."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .dataset import MeanImage, SliceRecordStore
from .errors import EmptyIndexSet, EmptySplit, EpochOutOfRange, NonFiniteLoss, UsageError
from .nn import Network
from .nn.layers import _xent

METRICS_HEADER = ("iteration", "epoch", "train_loss", "val_loss", "val_accuracy", "learning_rate")
EVAL_BATCH = 256


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    base_lr: float = 0.01
    lr_gamma: float = 0.1
    lr_step_epochs: int = 10
    momentum: float = 0.9
    seed: int = 0
    eval_every: int = 0  # iterations; 0 evaluates at epoch ends only

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr_step_epochs < 1:
            raise UsageError("epochs, batch_size and lr_step_epochs must be >= 1")
        if not 0 < self.lr_gamma <= 1:
            raise UsageError(f"lr_gamma must be in (0, 1], got {self.lr_gamma}")
        if self.base_lr < 0:
            raise UsageError(f"base_lr must be >= 0, got {self.base_lr}")
        if self.eval_every < 0:
            raise UsageError("eval_every must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(config: TrainConfig, epoch: int) -> float:
    """``base_lr * gamma ** (epoch // lr_step_epochs)`` for a 0-based epoch.

    When ``1 / gamma`` is an integer (0.1, 0.5, ...) the rate is computed as
    ``base_lr / (1 / gamma) ** k`` with an exact integer divisor, so 0.01 with
    gamma 0.1 gives exactly 0.001 and 0.0001 rather than 1.0000000000000002e-4.
    """
    if not 0 <= epoch < config.epochs:
        raise EpochOutOfRange(f"epoch {epoch} outside [0, {config.epochs})")
    k = epoch // config.lr_step_epochs
    inv = round(1.0 / config.lr_gamma)
    if 1.0 / inv == config.lr_gamma:
        return config.base_lr / inv**k
    return config.base_lr * config.lr_gamma**k


def iterations_for(n_train: int, batch_size: int, epochs: int) -> int:
    """The last batch of an epoch may be short, hence the ceiling."""
    if min(n_train, batch_size, epochs) < 1:
        raise UsageError("n_train, batch_size and epochs must be >= 1")
    return epochs * math.ceil(n_train / batch_size)


class MetricsRow(NamedTuple):
    iteration: int
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    learning_rate: float


@dataclass
class MetricsLog:
    rows: list[MetricsRow] = field(default_factory=list)
    best_val_accuracy: float = -1.0
    best_iteration: int = 0
    iterations: int = 0

    def append(self, row: MetricsRow) -> None:
        if self.rows and row.iteration <= self.rows[-1].iteration:
            raise ValueError("metrics iterations must increase")
        self.rows.append(row)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for r in self.rows:
            w.writerow([r.iteration, r.epoch, repr(r.train_loss), repr(r.val_loss),
                        repr(r.val_accuracy), repr(r.learning_rate)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.to_csv())

    @classmethod
    def read_csv(cls, path) -> "MetricsLog":
        log = cls()
        with open(path, newline="") as fh:
            for rec in csv.DictReader(fh):
                log.append(MetricsRow(int(rec["iteration"]), int(rec["epoch"]),
                                      *(float(rec[k]) for k in METRICS_HEADER[2:])))
        return log


def _batch(store: SliceRecordStore, idx, mean: MeanImage) -> np.ndarray:
    x = store.images(idx) - mean.pixels
    return x[:, None, :, :]


def evaluate(net: Network, store: SliceRecordStore, indices, mean: MeanImage) -> tuple[float, float]:
    """Mean cross-entropy and percent accuracy; ties go to the lowest class."""
    indices = np.asarray(indices, dtype=np.intp)
    if indices.size == 0:
        raise EmptyIndexSet("nothing to evaluate")
    labels = store.labels
    losses = np.empty(indices.size)
    correct = 0
    for start in range(0, indices.size, EVAL_BATCH):
        idx = indices[start : start + EVAL_BATCH]
        logits = net.forward(_batch(store, idx, mean))
        nll, probs = _xent(logits, labels[idx])
        losses[start : start + idx.size] = nll
        correct += int(np.count_nonzero(probs.argmax(axis=1) == labels[idx]))
    return float(losses.mean()), 100.0 * correct / indices.size


def train(
    net: Network,
    store: SliceRecordStore,
    split_indices,
    mean: MeanImage,
    config: TrainConfig,
    progress: Callable[[MetricsRow], None] | None = None,
) -> tuple[Network, MetricsLog]:
    """Fit ``net`` in place on ``split_indices.train``.

    Validation runs every ``config.eval_every`` iterations and at each epoch
    end. The parameters with the best validation accuracy (earliest on ties)
    are kept in ``net.best_state``; ``net`` itself ends with the final ones.
    """
    train_idx = np.asarray(split_indices[0], dtype=np.intp)
    val_idx = np.asarray(split_indices[1], dtype=np.intp)
    if train_idx.size == 0 or val_idx.size == 0:
        raise EmptySplit("train and validation splits must be non-empty")
    labels = store.labels
    rng = np.random.default_rng(config.seed)
    velocity = {name: np.zeros_like(p) for name, p, _ in net.parameters()}
    log = MetricsLog()
    net.best_state = None

    iteration = 0
    running, n_running = 0.0, 0

    def checkpoint(epoch, lr):
        nonlocal running, n_running
        val_loss, val_acc = evaluate(net, store, val_idx, mean)
        row = MetricsRow(iteration, epoch, running / max(n_running, 1), val_loss, val_acc, lr)
        log.append(row)
        if val_acc > log.best_val_accuracy:
            log.best_val_accuracy, log.best_iteration = val_acc, iteration
            net.best_state = net.state_dict()
        running, n_running = 0.0, 0
        if progress is not None:
            progress(row)

    for epoch in range(config.epochs):
        lr = lr_at(config, epoch)
        order = rng.permutation(train_idx)
        for start in range(0, order.size, config.batch_size):
            idx = order[start : start + config.batch_size]
            loss = net.loss_and_grad(_batch(store, idx, mean), labels[idx])
            if not math.isfinite(loss):
                raise NonFiniteLoss(f"loss {loss} at iteration {iteration}")
            for name, p, g in net.parameters():
                v = velocity[name]
                v *= config.momentum
                v -= lr * g
                p += v
            iteration += 1
            running += loss
            n_running += 1
            if config.eval_every and iteration % config.eval_every == 0:
                checkpoint(epoch, lr)
        if not log.rows or log.rows[-1].iteration != iteration:
            checkpoint(epoch, lr)
    log.iterations = iteration
    return net, log
