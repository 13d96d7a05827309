"""Pair-counting clustering scores and a wall-clock timer.

Every unordered pair of points is one "sample": it is predicted positive
when both points share a predicted cluster and actually positive when they
share a ground-truth cluster. Points whose truth label is -1 take part in
no pair.
"""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Any, Callable, Tuple

import numpy as np


class LengthMismatch(ValueError):
    pass


class EmptyConfusion(ValueError):
    pass


@dataclass(frozen=True)
class PairConfusion:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn


@dataclass(frozen=True)
class ScoreBundle:
    precise: float
    accuracy: float
    recall: float
    f_score: float

    def as_dict(self):
        return {"precise": self.precise, "accuracy": self.accuracy,
                "recall": self.recall, "f_score": self.f_score}


METRIC_NAMES = ("precise", "accuracy", "recall", "f_score")


def _pairs(counts: np.ndarray) -> int:
    counts = counts.astype(np.int64)
    return int((counts * (counts - 1) // 2).sum())


def pair_confusion(truth, predicted) -> PairConfusion:
    truth = np.asarray(truth)
    predicted = np.asarray(predicted)
    if truth.shape != predicted.shape or truth.ndim != 1:
        raise LengthMismatch(f"{truth.shape} truth labels vs {predicted.shape} predicted")
    keep = truth != -1
    truth, predicted = truth[keep], predicted[keep]
    n = truth.size
    if n == 0:
        return PairConfusion(0, 0, 0, 0)
    _, t = np.unique(truth, return_inverse=True)
    _, p = np.unique(predicted, return_inverse=True)
    table = np.zeros((t.max() + 1, p.max() + 1), dtype=np.int64)
    np.add.at(table, (t, p), 1)
    tp = _pairs(table.ravel())
    same_truth = _pairs(table.sum(axis=1))
    same_pred = _pairs(table.sum(axis=0))
    fp = same_pred - tp
    fn = same_truth - tp
    tn = n * (n - 1) // 2 - tp - fp - fn
    return PairConfusion(tp, fp, tn, fn)


def precise(c: PairConfusion) -> float:
    denom = c.tp + c.fp
    return c.tp / denom if denom else 0.0


def accuracy(c: PairConfusion) -> float:
    if c.total == 0:
        raise EmptyConfusion("accuracy of an empty confusion")
    return (c.tp + c.tn) / c.total


def recall(c: PairConfusion) -> float:
    denom = c.tp + c.fn
    return c.tp / denom if denom else 0.0


def harmonic(p: float, r: float) -> float:
    return 2 * p * r / (p + r) if p + r > 0 else 0.0


def f_score(c: PairConfusion) -> float:
    return harmonic(precise(c), recall(c))


def score(truth, predicted) -> ScoreBundle:
    """All four scores; accuracy is 0 when fewer than two labelled points remain."""
    c = pair_confusion(truth, predicted)
    acc = accuracy(c) if c.total else 0.0
    return ScoreBundle(precise(c), acc, recall(c), f_score(c))


def benchmark(run: Callable[[], Any]) -> Tuple[Any, float]:
    """Call ``run`` and return its result with the elapsed monotonic seconds."""
    start = time.perf_counter()
    result = run()
    return result, time.perf_counter() - start
