"""Binary classification metrics: confusion counts, MCC, G-mean, AUC."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import BiopsyLabel


class LengthMismatch(Exception):
    pass


class EmptyInput(Exception):
    pass


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class MetricsTriple:
    auc: Optional[float]  # None when a class is absent
    gmean: float
    mcc: Optional[float]

    def as_dict(self) -> dict:
        return {"auc": self.auc, "gmean": self.gmean, "mcc": self.mcc}


def confusion(preds: Sequence[BiopsyLabel], truth: Sequence[BiopsyLabel]) -> ConfusionCounts:
    if len(preds) != len(truth):
        raise LengthMismatch(f"{len(preds)} predictions vs {len(truth)} labels")
    if not preds:
        raise EmptyInput("no predictions")
    tp = fp = tn = fn = 0
    for p, t in zip(preds, truth):
        if t is BiopsyLabel.MALIGNANT:
            if p is BiopsyLabel.MALIGNANT:
                tp += 1
            else:
                fn += 1
        else:
            if p is BiopsyLabel.MALIGNANT:
                fp += 1
            else:
                tn += 1
    return ConfusionCounts(tp, fp, tn, fn)


def mcc(c: ConfusionCounts) -> float:
    """Matthews correlation; 0 by convention when any denominator factor is 0."""
    denom = (c.tp + c.fp) * (c.tp + c.fn) * (c.tn + c.fp) * (c.tn + c.fn)
    if denom == 0:
        return 0.0
    return (c.tp * c.tn - c.fp * c.fn) / math.sqrt(denom)


def recall(c: ConfusionCounts) -> float:
    pos = c.tp + c.fn
    return c.tp / pos if pos else 0.0


def specificity(c: ConfusionCounts) -> float:
    neg = c.tn + c.fp
    return c.tn / neg if neg else 0.0


def gmean(c: ConfusionCounts) -> float:
    return math.sqrt(recall(c) * specificity(c))


def auc(scores: Sequence[float], truth: Sequence[BiopsyLabel]) -> Optional[float]:
    """Mann-Whitney AUC with 0.5 credit for ties; None if a class is absent."""
    if len(scores) != len(truth):
        raise LengthMismatch(f"{len(scores)} scores vs {len(truth)} labels")
    s = np.asarray(scores, dtype=np.float64)
    y = np.array([t is BiopsyLabel.MALIGNANT for t in truth], dtype=bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        return None
    ranks = _average_ranks(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def _average_ranks(s: np.ndarray) -> np.ndarray:
    order = np.argsort(s, kind="stable")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_s = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_s[j + 1] == sorted_s[i]:
            j += 1
        ranks[order[i:j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def triple(scores: Sequence[float], preds: Sequence[BiopsyLabel],
           truth: Sequence[BiopsyLabel]) -> MetricsTriple:
    """AUC from scores plus G-mean/MCC from hard predictions.

    On a single-class slice AUC is None and MCC (always 0 there) is
    reported as None to keep it out of aggregates.
    """
    c = confusion(preds, truth)
    a = auc(scores, truth)
    single_class = (c.tp + c.fn == 0) or (c.tn + c.fp == 0)
    return MetricsTriple(a, gmean(c), None if single_class else mcc(c))
