from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.losses import grad_bce_binary, grad_entmax_binary


def confusion_matrix(y_true, y_pred, n_classes: int) -> np.ndarray:
    """Rows are ground truth, columns predictions."""
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
    return cm


def per_class_accuracy(cm) -> np.ndarray:
    cm = np.asarray(cm)
    rows = cm.sum(axis=1)
    if np.any(rows == 0):
        raise ValueError(f"classes {np.flatnonzero(rows == 0).tolist()} have no test examples")
    return np.diag(cm) / rows


def mean_per_class_accuracy(cm) -> float:
    return float(per_class_accuracy(cm).mean())


@dataclass(frozen=True)
class PrecisionRecord:
    """``None`` means no instance was selected for that group."""

    correct: float | None
    incorrect: float | None


def checker_precision(consistent, clean_pred, ground_truth) -> PrecisionRecord:
    """P(correct | consistent) and P(incorrect | inconsistent)."""
    consistent = np.asarray(consistent, dtype=bool)
    right = np.asarray(clean_pred) == np.asarray(ground_truth)
    n_c, n_i = consistent.sum(), (~consistent).sum()
    return PrecisionRecord(
        float(right[consistent].mean()) if n_c else None,
        float((~right[~consistent]).mean()) if n_i else None,
    )


def gradient_correlation_study(p_grid) -> tuple[np.ndarray, float]:
    """Columns (p, d L_entmax / dp, d L_bce / dp) and their Pearson correlation.

    Binary case with true class 0 and predicted score ``p`` for class 1.
    """
    p = np.asarray(p_grid, dtype=np.float64)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("grid points must lie strictly inside (0, 1)")
    g_em, g_bce = grad_entmax_binary(p), grad_bce_binary(p)
    r = float(np.corrcoef(g_em, g_bce)[0, 1]) if len(p) > 1 else float("nan")
    return np.column_stack([p, g_em, g_bce]), r
