from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

MODES = ("balanced", "pseudo", "uniform")


@dataclass
class SamplerState:
    """Batch index sampler.

    ``balanced`` pools by ground truth, ``pseudo`` by stored pseudolabels,
    ``uniform`` draws i.i.d. over the whole dataset. The balanced modes
    cycle over classes round-robin (the class cursor persists across
    batches), taking the next index of a per-class permutation and
    reshuffling a pool when it runs out.
    """

    mode: str
    rng: np.random.Generator
    n_items: int = 0
    pools: list[np.ndarray] = field(default_factory=list)
    order: list[np.ndarray] = field(default_factory=list)
    cursors: list[int] = field(default_factory=list)
    next_class: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"unknown sampler mode {self.mode!r}")

    def _set_pools(self, labels, n_classes):
        labels = np.asarray(labels)
        self.n_items = len(labels)
        self.pools = [np.flatnonzero(labels == c) for c in range(n_classes)]
        self.order = [self.rng.permutation(p) for p in self.pools]
        self.cursors = [0] * n_classes
        empty = [c for c, p in enumerate(self.pools) if len(p) == 0]
        if empty and self.mode != "uniform":
            log.warning("sampler: empty class pools %s are skipped", empty)

    def pool_sizes(self) -> list[int]:
        return [len(p) for p in self.pools]


def make_sampler(mode: str, dataset, rng: np.random.Generator) -> SamplerState:
    s = SamplerState(mode, rng)
    if mode == "balanced":
        s._set_pools(dataset.labels_for("train"), dataset.n_classes)
    elif mode == "pseudo":
        s._set_pools(dataset.pseudo, dataset.n_classes)
    else:
        s.n_items = len(dataset)
    return s


def refresh_pseudo_pools(sampler: SamplerState, dataset) -> SamplerState:
    """Rebuild per-class pools from the dataset's current pseudolabels."""
    if sampler.mode == "pseudo":
        sampler._set_pools(dataset.pseudo, dataset.n_classes)
    return sampler


def next_batch(sampler: SamplerState, batch_size: int) -> np.ndarray:
    if batch_size < 1:
        raise ValueError("batch size must be >= 1")
    if sampler.mode == "uniform":
        if sampler.n_items == 0:
            raise ValueError("cannot sample from an empty dataset")
        return sampler.rng.integers(0, sampler.n_items, size=batch_size)
    live = [c for c, p in enumerate(sampler.pools) if len(p)]
    if not live:
        raise ValueError("all class pools are empty")
    C = len(sampler.pools)
    out = np.empty(batch_size, dtype=np.int64)
    for i in range(batch_size):
        c = sampler.next_class
        while not len(sampler.pools[c]):
            c = (c + 1) % C
        sampler.next_class = (c + 1) % C
        if sampler.cursors[c] >= len(sampler.order[c]):
            sampler.order[c] = sampler.rng.permutation(sampler.pools[c])
            sampler.cursors[c] = 0
        out[i] = sampler.order[c][sampler.cursors[c]]
        sampler.cursors[c] += 1
    return out
