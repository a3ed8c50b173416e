from .checkpoint import load_checkpoint, save_checkpoint
from .losses import (
    LossValue,
    entropy,
    grad_bce_binary,
    grad_entmax_binary,
    loss_ce,
    loss_entropy,
    loss_ie,
    loss_sentry,
    loss_total,
    selective_entropy,
    smooth_distribution,
)
from .model import Classifier, DimensionError, backward, forward, forward_cache, init_classifier, pseudolabel
from .optim import DivergenceError, OptimizerState, grad_step

__all__ = [
    "Classifier", "DimensionError", "DivergenceError", "LossValue", "OptimizerState",
    "backward", "entropy", "forward", "forward_cache", "grad_bce_binary", "grad_entmax_binary",
    "grad_step", "init_classifier", "load_checkpoint", "loss_ce", "loss_entropy", "loss_ie",
    "loss_sentry", "loss_total", "pseudolabel", "save_checkpoint", "selective_entropy",
    "smooth_distribution",
]
