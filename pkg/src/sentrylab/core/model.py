"""Small feed-forward classifier with a cosine (weight-normalised input) head.

Parameters live in a flat ``dict[str, ndarray]`` so gradients, optimiser
state and checkpoints can all share the same keys::

    W0, b0, W1, b1, ...   hidden affine layers (out x in, out)
    head                  C x d, no bias

Forward pass for a batch ``X`` of shape (n, in_dim)::

    h_0 = X
    h_l = act(h_{l-1} @ W_l.T + b_l)
    u   = h_L / ||h_L||
    z   = (u @ head.T) / T
    p   = softmax(z)
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

NORM_EPS = 1e-12

ACTIVATIONS = ("relu", "tanh")


class DimensionError(ValueError):
    def __init__(self, expected: int, actual: int):
        super().__init__(f"input dimension mismatch: expected {expected}, got {actual}")
        self.expected = expected
        self.actual = actual


@dataclass
class Classifier:
    in_dim: int
    hidden: tuple[int, ...]
    n_classes: int
    temperature: float = 0.05
    activation: str = "relu"
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError(f"temperature must be positive, got {self.temperature}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        self.hidden = tuple(int(h) for h in self.hidden)

    @property
    def n_layers(self) -> int:
        return len(self.hidden)

    @property
    def feature_dim(self) -> int:
        return self.hidden[-1] if self.hidden else self.in_dim

    def param_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes = {}
        prev = self.in_dim
        for i, h in enumerate(self.hidden):
            shapes[f"W{i}"] = (h, prev)
            shapes[f"b{i}"] = (h,)
            prev = h
        shapes["head"] = (self.n_classes, prev)
        return shapes

    def n_params(self) -> int:
        return sum(int(np.prod(s)) for s in self.param_shapes().values())

    def copy(self) -> "Classifier":
        return Classifier(
            self.in_dim, self.hidden, self.n_classes, self.temperature, self.activation,
            {k: v.copy() for k, v in self.params.items()},
        )


def xavier_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


def init_classifier(rng, in_dim, hidden=(64, 32), n_classes=2, temperature=0.05,
                    activation="relu") -> Classifier:
    """Xavier-uniform weights everywhere, zero biases."""
    model = Classifier(in_dim, tuple(hidden), n_classes, temperature, activation)
    for name, shape in model.param_shapes().items():
        if name.startswith("b"):
            model.params[name] = np.zeros(shape)
        else:
            model.params[name] = xavier_uniform(rng, *shape)
    return model


def _act(name, a):
    if name == "relu":
        return np.maximum(a, 0.0)
    return np.tanh(a)


def _act_grad(name, a, h):
    if name == "relu":
        return (a > 0).astype(a.dtype)
    return 1.0 - h * h


def _as_batch(model: Classifier, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=np.float64)
    single = X.ndim == 1
    if single:
        X = X[None, :]
    if X.ndim != 2 or X.shape[1] != model.in_dim:
        raise DimensionError(model.in_dim, X.shape[-1] if X.ndim else 0)
    return X, single


@dataclass
class ForwardCache:
    inputs: list[np.ndarray]       # layer inputs h_{l-1}
    pre: list[np.ndarray]          # pre-activations a_l
    feats: np.ndarray              # h_L
    norms: np.ndarray              # ||h_L||, clamped, shape (n, 1)
    unit: np.ndarray               # u
    logits: np.ndarray             # z (already divided by T)
    log_probs: np.ndarray
    probs: np.ndarray


def forward_cache(model: Classifier, x) -> ForwardCache:
    X, _ = _as_batch(model, x)
    inputs, pre = [], []
    h = X
    for i in range(model.n_layers):
        inputs.append(h)
        a = h @ model.params[f"W{i}"].T + model.params[f"b{i}"]
        pre.append(a)
        h = _act(model.activation, a)
    norms = np.maximum(np.linalg.norm(h, axis=1, keepdims=True), NORM_EPS)
    u = h / norms
    z = (u @ model.params["head"].T) / model.temperature
    zmax = z.max(axis=1, keepdims=True)
    shifted = z - zmax
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_probs = shifted - lse
    return ForwardCache(inputs, pre, h, norms, u, z, log_probs, np.exp(log_probs))


def forward(model: Classifier, x) -> np.ndarray:
    """Class probabilities; a 1-D input returns a 1-D vector."""
    _, single = _as_batch(model, x)
    p = forward_cache(model, x).probs
    return p[0] if single else p


def pseudolabel(model: Classifier, x):
    """Argmax class; ``np.argmax`` already resolves ties to the lowest index."""
    p = forward(model, x)
    return np.argmax(p, axis=-1)


def backward(model: Classifier, cache: ForwardCache, dlogits: np.ndarray) -> dict[str, np.ndarray]:
    """Parameter gradients given dL/dz for every row of the cached batch.

    ``dlogits`` is the gradient with respect to the temperature-scaled
    logits ``z``; the 1/T factor is applied here.
    """
    head = model.params["head"]
    ds = dlogits / model.temperature            # dL/d(u @ head.T)
    grads = {"head": ds.T @ cache.unit}
    du = ds @ head
    u = cache.unit
    # Jacobian of u = h/||h|| is (I - u u^T) / ||h||
    dh = (du - u * np.sum(du * u, axis=1, keepdims=True)) / cache.norms
    for i in reversed(range(model.n_layers)):
        a = cache.pre[i]
        h = cache.feats if i == model.n_layers - 1 else cache.inputs[i + 1]
        da = dh * _act_grad(model.activation, a, h)
        grads[f"W{i}"] = da.T @ cache.inputs[i]
        grads[f"b{i}"] = da.sum(axis=0)
        if i > 0:
            dh = da @ model.params[f"W{i}"]
    return grads


def zeros_like_params(model: Classifier) -> dict[str, np.ndarray]:
    return {k: np.zeros_like(v) for k, v in model.params.items()}
