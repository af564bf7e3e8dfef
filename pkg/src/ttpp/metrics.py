"""Ranking and accuracy metrics, plus per-horizon report assembly.

Calibrated average precision reweights precision by w = N_neg/N_pos so
classes drowning in negatives stay comparable: cPrec = TP / (TP + FP/w),
and the score averages cPrec over the positive cut-offs. Plain average
precision is the w = 1 special case. Ordering is by descending score with
ties broken by ascending original index, so every value is reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class NoPositivesError(ValueError):
    """A class with zero positive frames has no defined AP; callers skip it."""


def _ranked_positives(scores, positives):
    scores = np.asarray(scores, dtype=np.float64)
    positives = np.asarray(positives).astype(bool)
    if scores.shape != positives.shape or scores.ndim != 1:
        raise ValueError(
            f"scores and positives must be equal-length vectors, got "
            f"{scores.shape} and {positives.shape}"
        )
    if not positives.any():
        raise NoPositivesError("no positive frames for this class")
    order = np.argsort(-scores, kind="stable")
    return positives[order]


def calibrated_ap(scores, positives) -> float:
    """Average of TP/(TP + FP/w) over positive cut-offs, w = N_neg/N_pos."""
    ranked = _ranked_positives(scores, positives)
    n_pos = int(ranked.sum())
    n_neg = ranked.size - n_pos
    tp = np.cumsum(ranked)
    fp = np.arange(1, ranked.size + 1) - tp
    if n_neg == 0:
        cprec = np.ones(ranked.size)
    else:
        w = n_neg / n_pos
        cprec = tp / (tp + fp / w)
    return float(cprec[ranked].sum() / n_pos)


def average_precision(scores, positives) -> float:
    """Standard AP with the same deterministic ordering."""
    ranked = _ranked_positives(scores, positives)
    n_pos = int(ranked.sum())
    tp = np.cumsum(ranked)
    prec = tp / np.arange(1, ranked.size + 1)
    return float(prec[ranked].sum() / n_pos)


def accuracy(pred_labels, true_labels) -> float:
    pred = np.asarray(pred_labels)
    true = np.asarray(true_labels)
    if pred.shape != true.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {true.shape}")
    if pred.size == 0:
        raise ValueError("accuracy of an empty prediction set is undefined")
    return float(np.mean(pred == true))


METRICS = ("cap", "map", "acc")


@dataclass
class HorizonReport:
    """Per-horizon metric table: one column per future step plus the mean."""

    metric: str
    horizon_labels: list[str]
    per_class: np.ndarray  # (horizon, n_classes), nan where skipped
    means: np.ndarray  # (horizon,)
    average: float
    n_scored: int  # evaluated (position, horizon) pairs

    @property
    def horizon(self) -> int:
        return len(self.horizon_labels)


def horizon_labels(horizon: int, chunk_seconds: float = 0.25) -> list[str]:
    return [f"{tau * chunk_seconds:g}s" for tau in range(1, horizon + 1)]


def evaluate_horizons(
    scores_fn,
    sequences,
    horizon: int,
    seq_len: int,
    metric: str = "map",
) -> HorizonReport:
    """Score every future chunk at every horizon and reduce per metric.

    `scores_fn(sequence, t)` returns (horizon, n_classes) scores for the
    rollout anchored at chunk t; anchors without seq_len observed chunks
    are skipped. For cap/map the mean runs over action classes only
    (background class 0 is excluded) and classes without positives are
    skipped; for acc the per-horizon value is plain argmax accuracy and
    the per-class slots hold accuracy conditioned on the true class.
    """
    if metric not in METRICS:
        raise ValueError(f"metric must be one of {METRICS}, got {metric!r}")
    sequences = list(sequences)
    if not sequences:
        raise ValueError("no sequences to evaluate")
    n_classes = sequences[0].n_classes
    chunk_seconds = sequences[0].chunk_seconds
    scores = [[] for _ in range(horizon)]
    truths = [[] for _ in range(horizon)]
    for seq in sequences:
        total = len(seq)
        for t in range(seq_len - 1, total - 1):
            table = np.asarray(scores_fn(seq, t))
            if table.shape != (horizon, n_classes):
                raise ValueError(
                    f"scorer returned {table.shape}, expected ({horizon}, {n_classes})"
                )
            last = min(horizon, total - 1 - t)
            for tau in range(1, last + 1):
                scores[tau - 1].append(table[tau - 1])
                truths[tau - 1].append(seq.labels[t + tau])
    n_scored = sum(len(s) for s in scores)
    if n_scored == 0:
        raise ValueError(
            f"empty report: no position has {seq_len} observed chunks plus a future"
        )
    per_class = np.full((horizon, n_classes), np.nan)
    means = np.full(horizon, np.nan)
    for tau in range(horizon):
        if not scores[tau]:
            continue
        table = np.stack(scores[tau])
        truth = np.asarray(truths[tau])
        if metric == "acc":
            pred = table.argmax(axis=1)
            means[tau] = accuracy(pred, truth)
            for c in range(n_classes):
                mask = truth == c
                if mask.any():
                    per_class[tau, c] = accuracy(pred[mask], truth[mask])
        else:
            fn = calibrated_ap if metric == "cap" else average_precision
            values = []
            for c in range(1, n_classes):
                try:
                    per_class[tau, c] = fn(table[:, c], truth == c)
                    values.append(per_class[tau, c])
                except NoPositivesError:
                    pass
            if values:
                means[tau] = float(np.mean(values))
    valid = means[~np.isnan(means)]
    if valid.size == 0:
        raise ValueError("empty report: every horizon/class cell was skipped")
    return HorizonReport(
        metric=metric,
        horizon_labels=horizon_labels(horizon, chunk_seconds),
        per_class=per_class,
        means=means,
        average=float(valid.mean()),
        n_scored=n_scored,
    )


def write_report_csv(reports: dict[str, HorizonReport], path) -> None:
    """Table-shaped CSV: method, one column per horizon, trailing avg."""
    items = list(reports.items())
    if not items:
        raise ValueError("no reports to write")
    labels = items[0][1].horizon_labels
    for name, rep in items:
        if rep.horizon_labels != labels:
            raise ValueError(f"report {name!r} has mismatched horizon labels")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("method," + ",".join(labels) + ",avg\n")
        for name, rep in items:
            cells = ",".join(repr(float(v)) for v in rep.means)
            fh.write(f"{name},{cells},{rep.average!r}\n")


def read_report_csv(path):
    """Returns (horizon_labels, {method: [per-horizon means..., avg]})."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("method,") or not lines[0].endswith(",avg"):
        raise ValueError(f"not a horizon report csv: {path}")
    labels = lines[0].split(",")[1:-1]
    rows = {}
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(labels) + 2:
            raise ValueError(f"malformed report row: {line!r}")
        rows[parts[0]] = [float(v) for v in parts[1:]]
    return labels, rows
