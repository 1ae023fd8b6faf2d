"""AUROC (Mann-Whitney, ties half-credited) and accuracy."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MetricError


@dataclass
class EvalBatch:
    """Softmax outputs and integer labels for one evaluation pass."""

    probs: np.ndarray    # (m, C), rows sum to 1
    labels: np.ndarray   # (m,), values in [0, C)

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.probs.ndim != 2 or self.probs.shape[0] != self.labels.shape[0]:
            raise DataError(f"probs {self.probs.shape} / labels {self.labels.shape} mismatch")
        if not np.allclose(self.probs.sum(axis=1), 1.0, atol=1e-9):
            raise DataError("probability rows must sum to 1")


def binary_auroc(scores, labels) -> float:
    """P(score_pos > score_neg) with ties counted 0.5, via midranks.

    The midrank formulation equals exhaustive pair counting exactly: midranks
    and pair credits are all multiples of 0.5, which float64 represents and
    sums without rounding at these magnitudes.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise DataError("scores and labels must be 1-D and equally long")
    pos = labels == 1
    neg = labels == 0
    if not (pos | neg).all():
        raise DataError("labels must be 0 or 1")
    n_pos = int(pos.sum())
    n_neg = int(neg.sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUROC undefined: both classes must be present")
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(len(scores), dtype=np.float64)
    i = 0
    sorted_scores = scores[order]
    while i < len(scores):
        j = i
        while j + 1 < len(scores) and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0   # midrank, 1-based
        i = j + 1
    rank_sum_pos = ranks[pos].sum()
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def macro_auroc(batch: EvalBatch) -> float:
    """Unweighted one-vs-rest mean of per-class binary AUROC.

    Classes absent from the labels are skipped with a warning.
    """
    present = np.unique(batch.labels)
    if len(present) < 2:
        raise MetricError("macro AUROC undefined: need >= 2 distinct labels")
    num_classes = batch.probs.shape[1]
    aucs = []
    for c in range(num_classes):
        is_c = (batch.labels == c).astype(np.int64)
        if is_c.sum() == 0:
            warnings.warn(f"class {c} absent from labels; skipped in macro AUROC")
            continue
        if is_c.sum() == len(is_c):
            raise MetricError("macro AUROC undefined: a single class covers all labels")
        aucs.append(binary_auroc(batch.probs[:, c], is_c))
    return float(np.mean(aucs))


def auroc(batch: EvalBatch) -> float:
    """Binary AUROC on class-1 probability for C=2, macro one-vs-rest otherwise."""
    if batch.probs.shape[1] == 2:
        return binary_auroc(batch.probs[:, 1], (batch.labels == 1).astype(np.int64))
    return macro_auroc(batch)


def accuracy(batch: EvalBatch) -> float:
    """Fraction of argmax-correct rows; argmax ties resolve to the lowest index."""
    if batch.probs.shape[0] == 0:
        raise DataError("accuracy of an empty batch")
    preds = batch.probs.argmax(axis=1)   # numpy argmax takes the first maximum
    return float((preds == batch.labels).mean())
