"""Losses and the end-to-end SGD training loop.

Per sample, the feature reconstruction loss sums squared errors over all
predicted steps and the classification loss sums cross-entropy over all
predicted steps; the batch averages sample losses. Runs are bit-for-bit
reproducible from (config, dataset, seed).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import AnticipationModel
from .tensor import Tensor, log_clipped, mul, sgd_step, tensor_sum


class TrainingDiverged(RuntimeError):
    """Raised when a batch loss goes non-finite; names epoch and batch."""


@dataclass
class TrainConfig:
    lr: float = 0.001
    momentum: float = 0.9
    batch_size: int = 32
    epochs: int = 10
    lam: float = 1.0  # weight on the feature reconstruction term
    seed: int = 0
    horizon: int = 8
    seq_len: int = 8

    def __post_init__(self):
        # lr = 0 is allowed as an explicit null update (useful in tests)
        if self.lr < 0:
            raise ValueError(f"lr must be >= 0, got {self.lr}")
        if not 0.0 <= self.momentum < 1.0:
            raise ValueError(f"momentum must be in [0, 1), got {self.momentum}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.lam < 0:
            raise ValueError(f"lam must be >= 0, got {self.lam}")
        if self.horizon < 1:
            raise ValueError(f"horizon must be >= 1, got {self.horizon}")
        if self.seq_len < 2:
            raise ValueError(f"seq_len must be >= 2, got {self.seq_len}")


@dataclass
class EpochStats:
    epoch: int
    class_loss: float
    feature_loss: float
    total_loss: float
    train_acc_h1: float


def feature_loss(pred: Tensor, target) -> Tensor:
    """Sum over steps of squared feature error (no per-step averaging)."""
    target = target if isinstance(target, Tensor) else Tensor(target)
    if pred.shape != target.shape:
        raise ValueError(f"feature_loss: shapes differ, {pred.shape} vs {target.shape}")
    diff = pred - target
    return tensor_sum(mul(diff, diff))


def class_loss(probs: Tensor, labels_onehot) -> Tensor:
    """Cross-entropy summed over steps; log clamped at 1e-12."""
    labels = np.asarray(labels_onehot, dtype=np.float64)
    return -tensor_sum(mul(log_clipped(probs), labels))


def total_loss(l_c: Tensor, l_r: Tensor, lam: float) -> Tensor:
    return l_c + mul(l_r, lam) if lam != 0.0 else l_c


def check_samples(model: AnticipationModel, samples) -> None:
    if not samples:
        raise ValueError("empty dataset")
    c = model.config
    s = samples[0]
    if s.observed.shape != (c.seq_len, c.d_m):
        raise ValueError(
            f"sample observed shape {s.observed.shape} != ({c.seq_len}, {c.d_m})"
        )
    if s.future_features.shape != (c.horizon, c.d_m):
        raise ValueError(
            f"sample future shape {s.future_features.shape} != ({c.horizon}, {c.d_m})"
        )
    if s.future_labels.shape != (c.horizon, c.n_classes):
        raise ValueError(
            f"sample label shape {s.future_labels.shape} != ({c.horizon}, {c.n_classes})"
        )


def train(model: AnticipationModel, samples, config: TrainConfig) -> list[EpochStats]:
    """Mini-batch SGD with momentum over reshuffled samples.

    History records per-epoch mean class loss, feature loss, total loss,
    and horizon-1 training accuracy. A non-finite batch loss aborts with
    the epoch/batch named rather than training on.
    """
    check_samples(model, samples)
    params = model.parameters()
    rng = np.random.default_rng(config.seed)
    n = len(samples)
    history: list[EpochStats] = []
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(n)
        sum_lc = 0.0
        sum_lr = 0.0
        hits = 0
        for batch_idx, start in enumerate(range(0, n, config.batch_size)):
            batch = [samples[i] for i in order[start : start + config.batch_size]]
            losses = []
            for sample in batch:
                roll, _ = model.anticipate(sample.observed, mode="train", rng=rng)
                l_c = class_loss(roll.probs, sample.future_labels)
                l_r = feature_loss(roll.features, sample.future_features)
                losses.append(total_loss(l_c, l_r, config.lam))
                sum_lc += l_c.item()
                sum_lr += l_r.item()
                if roll.probs.data[0].argmax() == sample.future_labels[0].argmax():
                    hits += 1
            batch_total = losses[0]
            for extra in losses[1:]:
                batch_total = batch_total + extra
            batch_loss = mul(batch_total, 1.0 / len(batch))
            if not np.isfinite(batch_loss.data):
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}, batch {batch_idx}"
                )
            batch_loss.backward()
            sgd_step(params, config.lr, config.momentum)
        history.append(
            EpochStats(
                epoch=epoch,
                class_loss=sum_lc / n,
                feature_loss=sum_lr / n,
                total_loss=(sum_lc + config.lam * sum_lr) / n,
                train_acc_h1=hits / n,
            )
        )
    return history


def write_history_csv(history, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,class_loss,feature_loss,total_loss,train_acc_h1\n")
        for row in history:
            fh.write(
                f"{row.epoch},{row.class_loss!r},{row.feature_loss!r},"
                f"{row.total_loss!r},{row.train_acc_h1!r}\n"
            )


def read_history_csv(path) -> list[EpochStats]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0] != "epoch,class_loss,feature_loss,total_loss,train_acc_h1":
        raise ValueError(f"not a history csv: {path}")
    out = []
    for line in lines[1:]:
        epoch, lc, lr, total, acc = line.split(",")
        out.append(EpochStats(int(epoch), float(lc), float(lr), float(total), float(acc)))
    return out
