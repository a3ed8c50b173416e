"""Long-tailed subsampling with an exact imbalance factor.

Class sizes follow a geometric (discretised Pareto-shaped) profile over
size rank ``r = 0 .. C-1``::

    n_r = n_min * IF ** (1 - r / (C - 1))

so the largest class holds ``n_min * IF`` examples and the smallest
exactly ``n_min``. Intermediate sizes are rounded and, when a target total
is requested, nudged by one at a time to absorb the rounding remainder.
"""

from __future__ import annotations

import math

import numpy as np

from .dataset import Dataset, LabelHistogram


class UnreachableImbalance(ValueError):
    def __init__(self, cls, needed, available):
        super().__init__(f"class {cls} needs {needed} examples but only {available} are available")
        self.cls = cls


def profile_weights(n_classes: int, imbalance: float) -> np.ndarray:
    if n_classes == 1:
        return np.ones(1)
    r = np.arange(n_classes) / (n_classes - 1)
    return imbalance ** (1.0 - r)


def _integral_min(n_min: int, imbalance: float) -> bool:
    return abs(n_min * imbalance - round(n_min * imbalance)) < 1e-9


def long_tail_counts(n_classes, imbalance, available, class_order=None, total=None) -> np.ndarray:
    """Per-class keep counts indexed by class id.

    ``class_order`` lists class ids from largest to smallest (default
    0..C-1); ``available`` is the per-class pool size.
    """
    if imbalance < 1:
        raise ValueError("imbalance factor must be >= 1")
    order = list(range(n_classes)) if class_order is None else [int(c) for c in class_order]
    if sorted(order) != list(range(n_classes)):
        raise ValueError(f"class_order must be a permutation of 0..{n_classes - 1}")
    avail = np.asarray(available, dtype=np.int64)[order]
    w = profile_weights(n_classes, imbalance)

    if total is None:
        limits = [math.floor(avail[r] / w[r] + 1e-9) for r in range(n_classes)]
        n_min = min(limits)
    else:
        n_min = max(1, round(total / w.sum()))
    while n_min >= 1 and not _integral_min(n_min, imbalance):
        n_min -= 1
    if n_min < 1:
        r = int(np.argmin(avail / w))
        raise UnreachableImbalance(order[r], math.ceil(w[r]), int(avail[r]))
    n_max = int(round(n_min * imbalance))

    scale = n_min if total is None else total / w.sum()
    counts = np.rint(scale * w).astype(np.int64)
    counts[0], counts[-1] = n_max, n_min
    counts[1:-1] = np.clip(counts[1:-1], n_min, n_max)
    if total is not None and n_classes > 2:
        diff = int(total - counts.sum())
        step = 1 if diff > 0 else -1
        r = 1
        stalled = 0
        while diff and stalled < n_classes:
            lo = counts[r + 1] if r + 1 < n_classes else n_min
            hi = counts[r - 1]
            new = counts[r] + step
            if lo <= new <= hi:
                counts[r] = new
                diff -= step
                stalled = 0
            else:
                stalled += 1
            r = r + 1 if r + 1 < n_classes - 1 else 1
    for r in range(n_classes):
        if counts[r] > avail[r]:
            raise UnreachableImbalance(order[r], int(counts[r]), int(avail[r]))
    out = np.empty(n_classes, dtype=np.int64)
    out[order] = counts
    return out


def long_tail(rng: np.random.Generator, dataset: Dataset, imbalance: float, class_order=None,
              total=None) -> tuple[Dataset, LabelHistogram]:
    """Uniformly subsample each class without replacement to the tail profile."""
    y = dataset.labels_for("construction")
    available = np.bincount(y, minlength=dataset.n_classes)
    counts = long_tail_counts(dataset.n_classes, imbalance, available, class_order, total)
    keep = []
    for c in range(dataset.n_classes):
        pool = np.flatnonzero(y == c)
        keep.append(rng.choice(pool, size=counts[c], replace=False))
    idx = np.sort(np.concatenate(keep))
    out = dataset.subset(idx)
    return out, LabelHistogram(tuple(int(c) for c in counts))
