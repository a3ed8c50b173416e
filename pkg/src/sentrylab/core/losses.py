"""Loss functions with hand-derived gradients.

Every loss goes through the same route: compute ``dL/dz`` on the
temperature-scaled logits in closed form, then hand it to
:func:`sentrylab.core.model.backward`. Closed forms used (per row):

* cross-entropy:   dL/dz = p - onehot(y)
* entropy H(p):    dH/dz_j = -p_j (log p_j + H)
* linear in p with weights w (information entropy, w = log q):
                   dL/dz_j = p_j (w_j - <p, w>)
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Classifier, backward, forward_cache, zeros_like_params

SMOOTHING_EPS = 1e-8


@dataclass
class LossValue:
    value: float
    grad: dict[str, np.ndarray]

    def __add__(self, other: "LossValue") -> "LossValue":
        return LossValue(self.value + other.value,
                         {k: self.grad[k] + other.grad[k] for k in self.grad})

    def scaled(self, w: float) -> "LossValue":
        return LossValue(w * self.value, {k: w * g for k, g in self.grad.items()})


def _zero(model):
    return LossValue(0.0, zeros_like_params(model))


def entropy(dist) -> float | np.ndarray:
    """Shannon entropy in nats along the last axis, with 0 log 0 = 0."""
    p = np.asarray(dist, dtype=np.float64)
    logp = np.log(np.where(p > 0, p, 1.0))
    return -np.sum(p * logp, axis=-1)


def _row_entropy(cache):
    # log-softmax keeps p log p finite when p underflows to 0
    return -np.sum(cache.probs * cache.log_probs, axis=1)


def _entropy_dlogits(cache):
    H = _row_entropy(cache)
    return -cache.probs * (cache.log_probs + H[:, None]), H


def smooth_distribution(counts, eps: float = SMOOTHING_EPS) -> np.ndarray:
    """Additive smoothing then renormalisation; an all-zero input becomes uniform."""
    c = np.asarray(counts, dtype=np.float64)
    total = c.sum()
    p = c / total if total > 0 else np.zeros_like(c)
    p = p + eps
    return p / p.sum()


def loss_ce(model: Classifier, X, y) -> LossValue:
    """Mean cross-entropy against ground-truth labels."""
    y = np.asarray(y)
    if y.size and (y.min() < 0 or y.max() >= model.n_classes):
        raise ValueError(f"label out of range [0, {model.n_classes})")
    cache = forward_cache(model, X)
    n = len(y)
    rows = np.arange(n)
    value = -cache.log_probs[rows, y].mean()
    dz = cache.probs.copy()
    dz[rows, y] -= 1.0
    return LossValue(float(value), backward(model, cache, dz / n))


def loss_entropy(model: Classifier, X) -> LossValue:
    """Mean predictive entropy over a batch (conditional entropy minimisation)."""
    cache = forward_cache(model, X)
    dz, H = _entropy_dlogits(cache)
    n = len(H)
    return LossValue(float(H.mean()), backward(model, cache, dz / n))


def loss_ie(model: Classifier, X, q) -> LossValue:
    """Mean of sum_c p(c|x) log q(c); ``q`` is treated as a constant."""
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (model.n_classes,):
        raise ValueError(f"q must have shape ({model.n_classes},), got {q.shape}")
    if np.any(q <= 0):
        raise ValueError("q has a zero entry; smooth it before computing the loss")
    logq = np.log(q)
    cache = forward_cache(model, X)
    p = cache.probs
    vals = p @ logq
    dz = p * (logq[None, :] - vals[:, None])
    n = len(vals)
    return LossValue(float(vals.mean()), backward(model, cache, dz / n))


def selective_entropy(model: Classifier, X_min, X_max, n_total: int | None = None) -> LossValue:
    """Proportion-weighted entropy minimisation / maximisation.

    Returns ``(n_min/n) * mean H(X_min) - (n_max/n) * mean H(X_max)``, where
    ``n`` defaults to ``n_min + n_max``. Passing a larger ``n_total`` keeps
    the weights tied to the full batch when some instances are dropped
    (e.g. consistent-only selection). An empty group contributes nothing.
    """
    X_min = np.empty((0, model.in_dim)) if X_min is None else np.asarray(X_min, dtype=np.float64)
    X_max = np.empty((0, model.in_dim)) if X_max is None else np.asarray(X_max, dtype=np.float64)
    n_min, n_max = len(X_min), len(X_max)
    n = n_min + n_max if n_total is None else n_total
    if n == 0:
        raise ValueError("selective entropy needs at least one instance")
    if n < n_min + n_max:
        raise ValueError("n_total smaller than the number of selected instances")
    out = _zero(model)
    # (n_min/n) * mean = sum / n, so the per-row gradient weight is +-1/n
    if n_min:
        out = out + loss_entropy(model, X_min).scaled(n_min / n)
    if n_max:
        out = out + loss_entropy(model, X_max).scaled(-n_max / n)
    return out


def loss_sentry(model: Classifier, verdicts, members) -> LossValue:
    """Selective entropy objective driven by committee verdicts.

    ``members[i][j]`` is the j-th augmented copy of instance i. Consistent
    instances contribute the entropy of their last matching member,
    inconsistent ones the negative entropy of their last mismatching member.
    """
    if len(verdicts) == 0:
        raise ValueError("empty verdict list")
    x_min, x_max = [], []
    for v, m in zip(verdicts, members):
        if v.consistent:
            x_min.append(m[v.last_match])
        else:
            x_max.append(m[v.last_mismatch])
    return selective_entropy(model, np.array(x_min).reshape(-1, model.in_dim),
                             np.array(x_max).reshape(-1, model.in_dim))


def loss_total(model, src_X, src_y, tgt_X, q, sentry: LossValue | None,
               lambda_ie: float = 0.1, lambda_sentry: float = 1.0) -> tuple[LossValue, dict[str, float]]:
    """Cross-entropy plus weighted information-entropy and selective terms.

    ``sentry`` is the already-computed selective entropy term (its inputs
    depend on the selection mode). Zero-weighted terms are skipped so a
    zero-lambda run is bit-identical to plain supervised training.
    """
    if lambda_ie < 0 or lambda_sentry < 0:
        raise ValueError("loss weights must be nonnegative")
    ce = loss_ce(model, src_X, src_y)
    parts = {"ce": ce.value, "ie": 0.0, "sentry": 0.0}
    total = ce
    if lambda_ie:
        ie = loss_ie(model, tgt_X, q)
        parts["ie"] = ie.value
        total = total + ie.scaled(lambda_ie)
    if lambda_sentry and sentry is not None:
        parts["sentry"] = sentry.value
        total = total + sentry.scaled(lambda_sentry)
    parts["total"] = total.value
    return total, parts


# Binary-case gradients with respect to the predicted score p, true class 0.

def grad_entmax_binary(p):
    """d/dp of p log p + (1-p) log(1-p)."""
    p = np.asarray(p, dtype=np.float64)
    return np.log(p / (1.0 - p))


def grad_bce_binary(p):
    """d/dp of -log(1-p)."""
    p = np.asarray(p, dtype=np.float64)
    return 1.0 / (1.0 - p)
