import numpy as np

from sentrylab.core import init_classifier


def random_model(rng, in_dim=5, hidden=(8, 6), n_classes=4, temperature=None, activation="relu"):
    """Small model with nonzero biases; at most ~2k parameters."""
    T = rng.uniform(0.05, 1.0) if temperature is None else temperature
    m = init_classifier(rng, in_dim, hidden, n_classes, T, activation)
    for k in m.params:
        if k.startswith("b"):
            m.params[k] = 0.1 * rng.standard_normal(m.params[k].shape)
    return m


def numeric_grad(model, fn, h=1e-5):
    """Central finite differences of ``fn(model).value`` over every parameter."""
    out = {}
    for name, w in model.params.items():
        g = np.zeros_like(w)
        for i in np.ndindex(w.shape):
            orig = w[i]
            w[i] = orig + h
            plus = fn(model).value
            w[i] = orig - h
            minus = fn(model).value
            w[i] = orig
            g[i] = (plus - minus) / (2 * h)
        out[name] = g
    return out


def max_rel_error(analytic, numeric, floor=1e-6):
    """Worst entry-wise |a - n| / max(|a|, |n|, floor)."""
    worst = 0.0
    for k in analytic:
        a, n = analytic[k], numeric[k]
        rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(rel.max()))
    return worst


def scalar_forward(model, x):
    """Straight-line re-implementation of the forward pass with Python floats."""
    h = [float(v) for v in x]
    for i in range(model.n_layers):
        W, b = model.params[f"W{i}"], model.params[f"b{i}"]
        a = [sum(W[r, c] * h[c] for c in range(len(h))) + b[r] for r in range(W.shape[0])]
        if model.activation == "relu":
            h = [v if v > 0 else 0.0 for v in a]
        else:
            import math
            h = [math.tanh(v) for v in a]
    norm = sum(v * v for v in h) ** 0.5
    u = [v / norm for v in h]
    head = model.params["head"]
    z = [sum(head[r, c] * u[c] for c in range(len(u))) / model.temperature for r in range(head.shape[0])]
    zmax = max(z)
    ez = [np.exp(v - zmax) for v in z]
    s = sum(ez)
    return [v / s for v in ez]
