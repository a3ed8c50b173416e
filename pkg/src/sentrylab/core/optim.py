from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Classifier


class DivergenceError(RuntimeError):
    """Raised when a gradient or loss turns non-finite."""


@dataclass
class OptimizerState:
    kind: str = "adam"
    lr: float = 2e-4
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0
    t: int = 0
    slots: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in ("adam", "sgd"):
            raise ValueError(f"unknown optimizer {self.kind!r}")


def grad_step(model: Classifier, grad: dict[str, np.ndarray], state: OptimizerState) -> Classifier:
    """Apply one in-place update to ``model.params`` and return the model."""
    for name, g in grad.items():
        if name not in model.params:
            raise KeyError(f"gradient for unknown parameter {name!r}")
        if g.shape != model.params[name].shape:
            raise ValueError(f"gradient shape {g.shape} != parameter shape "
                             f"{model.params[name].shape} for {name!r}")
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient in {name!r} at step {state.t}")
    state.t += 1
    for name, g in grad.items():
        w = model.params[name]
        if state.weight_decay:
            g = g + state.weight_decay * w
        if state.kind == "sgd":
            buf = state.slots.setdefault("velocity", {})
            if state.momentum:
                v = buf.get(name)
                v = g.copy() if v is None else state.momentum * v + g
                buf[name] = v
                g = v
            w -= state.lr * g
        else:
            m = state.slots.setdefault("m", {}).get(name, np.zeros_like(w))
            v = state.slots.setdefault("v", {}).get(name, np.zeros_like(w))
            m = state.beta1 * m + (1 - state.beta1) * g
            v = state.beta2 * v + (1 - state.beta2) * g * g
            state.slots["m"][name] = m
            state.slots["v"][name] = v
            mhat = m / (1 - state.beta1 ** state.t)
            vhat = v / (1 - state.beta2 ** state.t)
            w -= state.lr * mhat / (np.sqrt(vhat) + state.eps)
    return model
