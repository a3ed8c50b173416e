from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


@dataclass
class Dataset:
    """Examples of one domain/split.

    Ground truth is kept private and is only handed out through
    :meth:`labels_for`, which counts reads per purpose. Training code asks
    with ``purpose="train"``; metrics and oracle ablations use ``"eval"``
    and ``"oracle"``. Tests assert the target's ``"train"`` count stays zero.
    """

    X: np.ndarray
    _y: np.ndarray | None
    n_classes: int
    domain: str = "source"
    split: str = "train"
    image_shape: tuple[int, int] | None = None
    pseudo: np.ndarray = field(default=None)
    audit: Counter = field(default_factory=Counter)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        if self._y is not None:
            self._y = np.asarray(self._y, dtype=np.int64)
            if len(self._y) != len(self.X):
                raise ValueError("label count does not match example count")
            if len(self._y) and (self._y.min() < 0 or self._y.max() >= self.n_classes):
                raise ValueError(f"labels must lie in [0, {self.n_classes})")
        if self.pseudo is None:
            self.pseudo = np.full(len(self.X), -1, dtype=np.int64)

    def __len__(self):
        return len(self.X)

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    @property
    def has_labels(self) -> bool:
        return self._y is not None

    def labels_for(self, purpose: str, idx=None) -> np.ndarray:
        if self._y is None:
            raise LookupError(f"{self.domain}/{self.split} has no ground-truth labels")
        self.audit[purpose] += 1
        y = self._y if idx is None else self._y[idx]
        return y.copy()

    def set_pseudolabels(self, idx, labels):
        labels = np.asarray(labels, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= self.n_classes):
            raise ValueError(f"pseudolabels must lie in [0, {self.n_classes})")
        self.pseudo[idx] = labels

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(self.X[idx].copy(), None if self._y is None else self._y[idx].copy(),
                       self.n_classes, self.domain, self.split, self.image_shape,
                       self.pseudo[idx].copy())

    def histogram(self, purpose="eval") -> "LabelHistogram":
        return LabelHistogram.from_labels(self.labels_for(purpose), self.n_classes)

    def save(self, path):
        np.savez(path, X=self.X, y=np.array([]) if self._y is None else self._y,
                 has_labels=self._y is not None, n_classes=self.n_classes,
                 domain=self.domain, split=self.split,
                 image_shape=np.array(self.image_shape or (), dtype=np.int64))

    @classmethod
    def load(cls, path) -> "Dataset":
        with np.load(path, allow_pickle=False) as z:
            shape = tuple(int(s) for s in z["image_shape"]) or None
            y = z["y"].astype(np.int64) if bool(z["has_labels"]) else None
            return cls(z["X"], y, int(z["n_classes"]), str(z["domain"]), str(z["split"]), shape)


@dataclass(frozen=True)
class LabelHistogram:
    counts: tuple[int, ...]

    @classmethod
    def from_labels(cls, labels, n_classes) -> "LabelHistogram":
        return cls(tuple(int(c) for c in np.bincount(np.asarray(labels, dtype=np.int64),
                                                     minlength=n_classes)))

    @property
    def total(self) -> int:
        return sum(self.counts)

    @property
    def imbalance_factor(self) -> float:
        if min(self.counts) <= 0:
            raise ValueError("imbalance factor undefined: some class has no examples")
        return max(self.counts) / min(self.counts)

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class", "count"])
            for c, n in enumerate(self.counts):
                w.writerow([c, n])


def write_manifest(path, datasets: dict[str, Dataset]):
    """One row per dataset: name, domain, split, size, dim, n_classes."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["name", "domain", "split", "size", "dim", "n_classes"])
        for name, ds in datasets.items():
            w.writerow([name, ds.domain, ds.split, len(ds), ds.dim, ds.n_classes])
