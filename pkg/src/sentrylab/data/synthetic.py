"""Synthetic source/target domain pairs with covariate and label shift.

Class-conditional generators are shared by both domains; the target's
inputs are then pushed through a rigid-ish covariate shift::

    x_T = scale * R (x - centre) + centre + translation + noise

where ``R`` rotates by ``rotation`` radians in a fixed random plane. The
target label distribution is either given directly (``target_probs``) or
long-tailed to an exact imbalance factor from a balanced pool.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .longtail import long_tail


@dataclass
class SyntheticSpec:
    n_classes: int = 5
    dim: int = 10
    generator: str = "blobs"
    separation: float = 3.0
    cluster_std: float = 1.0
    n_source_train: int = 2000
    source_probs: tuple[float, ...] | None = None
    n_source_test_per_class: int = 200
    n_target_train: int = 2000
    target_probs: tuple[float, ...] | None = None
    target_if: float | None = None
    class_order: tuple[int, ...] | None = None
    target_total: int | None = None
    n_target_pool_per_class: int = 1000
    n_target_test_per_class: int = 200
    rotation: float = 0.0
    translation: float = 0.0
    scale: float = 1.0
    noise: float = 0.0

    def __post_init__(self):
        if self.generator not in ("blobs", "moons"):
            raise ValueError(f"unknown generator {self.generator!r}")
        if self.generator == "moons" and self.n_classes != 2:
            raise ValueError("the moons generator produces exactly two classes")


class _Generator:
    def __init__(self, rng, spec: SyntheticSpec):
        self.spec = spec
        d = spec.dim
        if spec.generator == "blobs":
            means = rng.standard_normal((spec.n_classes, d))
            means /= np.linalg.norm(means, axis=1, keepdims=True)
            self.means = spec.separation * means
        else:
            basis, _ = np.linalg.qr(rng.standard_normal((d, max(d, 2))))
            self.embed = basis[:, :2].T * spec.separation
        basis, _ = np.linalg.qr(rng.standard_normal((d, max(d, 2))))
        self.plane = basis[:, :2] if d >= 2 else None
        self.direction = basis[:, -1] if d >= 3 else np.ones(d) / np.sqrt(d)

    def sample(self, rng, labels):
        labels = np.asarray(labels, dtype=np.int64)
        n, s = len(labels), self.spec
        if s.generator == "blobs":
            return self.means[labels] + s.cluster_std * rng.standard_normal((n, s.dim))
        t = rng.uniform(0, np.pi, size=n)
        pts = np.where(labels[:, None] == 0,
                       np.c_[np.cos(t), np.sin(t)],
                       np.c_[1 - np.cos(t), 0.5 - np.sin(t)])
        return pts @ self.embed + s.cluster_std * rng.standard_normal((n, s.dim))

    def shift(self, rng, X):
        s = self.spec
        out = X.copy()
        if s.rotation and self.plane is not None:
            P = self.plane
            coords = out @ P
            c, sn = np.cos(s.rotation), np.sin(s.rotation)
            rot = coords @ np.array([[c, sn], [-sn, c]])
            out = out + (rot - coords) @ P.T
        out = s.scale * out + s.translation * self.direction
        if s.noise:
            out = out + s.noise * rng.standard_normal(out.shape)
        return out


def _labels_from_probs(rng, n, probs, n_classes):
    probs = np.full(n_classes, 1.0 / n_classes) if probs is None else np.asarray(probs, dtype=np.float64)
    if probs.shape != (n_classes,) or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise ValueError(f"label probabilities must be {n_classes} nonnegative numbers summing to 1")
    counts = rng.multinomial(n, probs)
    return rng.permutation(np.repeat(np.arange(n_classes), counts))


def _balanced(n_per_class, n_classes):
    return np.repeat(np.arange(n_classes), n_per_class)


def _check_splits(datasets):
    for ds in datasets:
        counts = np.bincount(ds.labels_for("construction"), minlength=ds.n_classes)
        if counts.min() < 2:
            c = int(np.argmin(counts))
            raise ValueError(f"{ds.domain}/{ds.split}: class {c} has {counts[c]} examples (< 2)")


def make_synthetic_pair(rng: np.random.Generator, spec: SyntheticSpec) -> dict[str, Dataset]:
    """Returns ``source_train``, ``source_test``, ``target_train``, ``target_test``."""
    C = spec.n_classes
    gen = _Generator(rng, spec)

    def build(labels, domain, split):
        X = gen.sample(rng, labels)
        if domain == "target":
            X = gen.shift(rng, X)
        return Dataset(X, labels, C, domain, split)

    src_train = build(_labels_from_probs(rng, spec.n_source_train, spec.source_probs, C), "source", "train")
    src_test = build(_balanced(spec.n_source_test_per_class, C), "source", "test")
    if spec.target_if is not None:
        pool = build(_balanced(spec.n_target_pool_per_class, C), "target", "train")
        tgt_train, _ = long_tail(rng, pool, spec.target_if, spec.class_order, spec.target_total)
    else:
        tgt_train = build(_labels_from_probs(rng, spec.n_target_train, spec.target_probs, C), "target", "train")
    tgt_test = build(_balanced(spec.n_target_test_per_class, C), "target", "test")
    out = {"source_train": src_train, "source_test": src_test,
           "target_train": tgt_train, "target_test": tgt_test}
    _check_splits(out.values())
    for ds in out.values():
        ds.audit.clear()
    return out
