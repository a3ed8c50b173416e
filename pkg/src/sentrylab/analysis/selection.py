from __future__ import annotations

import numpy as np


def selection_fraction_series(logs, n_classes: int | None = None):
    """Per-epoch fraction of seen target draws selected for entropy min / max.

    ``logs`` is the per-epoch verdict log of a run (``RunRecord.logs`` or
    :func:`sentrylab.trainer.read_verdict_log`), where ``selected`` is +1
    for minimisation, -1 for maximisation and 0 for neither. With
    ``n_classes`` set, also returns an (epochs, C) array of per-class
    minimisation fractions grouped by the logged ground truth; classes not
    seen in an epoch are NaN.
    """
    mins, maxs, per_class = [], [], []
    for lg in logs:
        sel = np.asarray(lg["selected"])
        mins.append(float(np.mean(sel == 1)) if sel.size else float("nan"))
        maxs.append(float(np.mean(sel == -1)) if sel.size else float("nan"))
        if n_classes is not None:
            y = np.asarray(lg["true_label"])
            row = np.full(n_classes, np.nan)
            for c in range(n_classes):
                mask = y == c
                if mask.any():
                    row[c] = np.mean(sel[mask] == 1)
            per_class.append(row)
    if n_classes is None:
        return np.array(mins), np.array(maxs)
    return np.array(mins), np.array(maxs), np.array(per_class).reshape(-1, n_classes)


def increasing_class_share(per_class: np.ndarray) -> float:
    """Share of classes whose min-fraction does not drop from first to last epoch."""
    first, last = per_class[0], per_class[-1]
    ok = ~(np.isnan(first) | np.isnan(last))
    if not ok.any():
        return float("nan")
    return float(np.mean(last[ok] >= first[ok]))
