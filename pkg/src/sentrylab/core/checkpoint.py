"""Model checkpoints.

A checkpoint is a NumPy ``.npz`` archive (an uncompressed zip of ``.npy``
members). Members:

``format_version``  int64 scalar, currently 1
``meta``            0-d unicode array holding a JSON object with keys
                    ``in_dim``, ``hidden`` (list), ``n_classes``,
                    ``temperature``, ``activation``, ``param_names`` (list)
                    and ``rng_state`` (a ``numpy.random.Generator``
                    bit-generator state dict, or null)
``param/<name>``    one float64 array per parameter, stored little-endian
                    (``<f8``) with the shape listed by
                    :meth:`Classifier.param_shapes`
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .model import Classifier

FORMAT_VERSION = 1


def save_checkpoint(path, model: Classifier, rng: np.random.Generator | None = None) -> Path:
    path = Path(path)
    meta = {
        "in_dim": model.in_dim,
        "hidden": list(model.hidden),
        "n_classes": model.n_classes,
        "temperature": model.temperature,
        "activation": model.activation,
        "param_names": list(model.params),
        "rng_state": None if rng is None else rng.bit_generator.state,
    }
    arrays = {f"param/{k}": np.ascontiguousarray(v, dtype="<f8") for k, v in model.params.items()}
    with open(path, "wb") as fh:
        np.savez(fh, format_version=np.int64(FORMAT_VERSION),
                 meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)
    return path


def load_checkpoint(path) -> tuple[Classifier, dict | None]:
    """Return the model and the stored RNG state (or ``None``)."""
    with np.load(path, allow_pickle=False) as z:
        version = int(z["format_version"])
        if version != FORMAT_VERSION:
            raise ValueError(f"unsupported checkpoint version {version}")
        meta = json.loads(str(z["meta"]))
        params = {k: z[f"param/{k}"].astype(np.float64) for k in meta["param_names"]}
    model = Classifier(meta["in_dim"], tuple(meta["hidden"]), meta["n_classes"],
                       meta["temperature"], meta["activation"], params)
    for name, shape in model.param_shapes().items():
        if params.get(name) is None or params[name].shape != shape:
            raise ValueError(f"checkpoint parameter {name!r} missing or misshapen")
    return model, meta["rng_state"]
