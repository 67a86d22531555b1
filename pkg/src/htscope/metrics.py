"""Confusion-matrix accounting, accuracy and Matthews correlation.

"Intruded" is the positive class throughout. MCC is computed in exact
integer arithmetic before the final square root, and an undefined
denominator is reported as None rather than coerced to zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError

# An MCC above this marks a very good binary classifier in reports.
GOOD_MCC_THRESHOLD = 0.7


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self) -> None:
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise DomainError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            tp=self.tp + other.tp,
            tn=self.tn + other.tn,
            fp=self.fp + other.fp,
            fn=self.fn + other.fn,
        )


def tally(predictions, truth) -> ConfusionCounts:
    """Count confusion outcomes over parallel prediction/truth streams."""
    pred = np.asarray(predictions, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape:
        raise DomainError("prediction and truth streams must have equal length")
    return ConfusionCounts(
        tp=int(np.count_nonzero(pred & true)),
        tn=int(np.count_nonzero(~pred & ~true)),
        fp=int(np.count_nonzero(pred & ~true)),
        fn=int(np.count_nonzero(~pred & true)),
    )


def accuracy(counts: ConfusionCounts) -> float:
    if counts.total == 0:
        raise DomainError("accuracy undefined for empty counts")
    return (counts.tp + counts.tn) / counts.total


def mcc(counts: ConfusionCounts) -> float | None:
    """Matthews correlation coefficient, or None when any denominator
    factor is zero."""
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    denom_sq = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom_sq == 0:
        return None
    num = tp * tn - fp * fn
    return num / math.sqrt(denom_sq)


def window_detection_rate(predictions, truth, min_hits: int = 1) -> float:
    """Fraction of activation windows with at least `min_hits` flagged
    samples inside. A window is a maximal run of consecutive true samples."""
    pred = np.asarray(predictions, dtype=bool)
    true = np.asarray(truth, dtype=bool)
    if pred.shape != true.shape:
        raise DomainError("prediction and truth streams must have equal length")
    padded = np.concatenate([[False], true, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    if starts.size == 0:
        raise DomainError("no activation windows in truth stream")
    hits = sum(1 for s, e in zip(starts, ends) if int(pred[s:e].sum()) >= min_hits)
    return hits / starts.size


@dataclass
class EvalReport:
    """Evaluation result for one (benchmark, perturbation) cell."""

    counts: ConfusionCounts
    benchmark: str = ""
    tags: dict = field(default_factory=dict)

    @property
    def accuracy(self) -> float:
        return accuracy(self.counts)

    @property
    def mcc(self) -> float | None:
        return mcc(self.counts)

    def to_row(self) -> dict:
        m = self.mcc
        return {
            "benchmark": self.benchmark,
            "tp": self.counts.tp,
            "tn": self.counts.tn,
            "fp": self.counts.fp,
            "fn": self.counts.fn,
            "accuracy": self.accuracy,
            "mcc": "undefined" if m is None else m,
            "good_classifier": bool(m is not None and m > GOOD_MCC_THRESHOLD),
            **self.tags,
        }
