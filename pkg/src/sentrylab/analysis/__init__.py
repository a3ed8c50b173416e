from .metrics import (
    PrecisionRecord,
    checker_precision,
    confusion_matrix,
    gradient_correlation_study,
    mean_per_class_accuracy,
    per_class_accuracy,
)
from .selection import increasing_class_share, selection_fraction_series

__all__ = [
    "PrecisionRecord", "checker_precision", "confusion_matrix", "gradient_correlation_study",
    "increasing_class_share", "mean_per_class_accuracy", "per_class_accuracy",
    "selection_fraction_series",
]
