"""Declarative run configuration.

Config files are plain ``key = value`` lines. Keys are dotted
``section.key`` paths, or bare keys under a ``[section]`` header::

    [run]
    command = adapt
    out_dir = runs/toy

    train.k = 5
    augment.range_rotate = 0.3

    [grid]
    train.k = 1, 3

``#`` starts a comment. Sequences are comma separated; ``none`` clears an
optional value. Grid values are comma separated, or ``;`` separated when the
swept key is itself a sequence. Every key also exists as a command-line flag
named after its leaf (``--k``, ``--lambda-ie``, ``--range-rotate``); flags
win over file values, which win over defaults.
"""

from __future__ import annotations

import types
import typing
from dataclasses import asdict, dataclass, field, fields, replace

from ..augment import OPS
from ..data.synthetic import SyntheticSpec
from ..trainer import ConfigError, TrainConfig

COMMANDS = ("build-data", "train-source", "adapt", "grid", "analyze")
DATA_KINDS = ("synthetic", "idx", "saved")
SECTIONS = ("run", "data", "model", "train", "augment")
IDX_KEYS = tuple(f"{split}_{part}" for split in ("source_train", "source_test", "target_train", "target_test")
                 for part in ("images", "labels"))


@dataclass
class RunSection:
    command: str = "adapt"
    out_dir: str = "runs/out"
    seed: int = 0
    input_dir: str | None = None
    svg: bool = True
    parallel: bool = False


@dataclass
class DataConfig(SyntheticSpec):
    kind: str = "synthetic"
    data_dir: str | None = None
    source_train_images: str | None = None
    source_train_labels: str | None = None
    source_test_images: str | None = None
    source_test_labels: str | None = None
    target_train_images: str | None = None
    target_train_labels: str | None = None
    target_test_images: str | None = None
    target_test_labels: str | None = None

    def synthetic_spec(self) -> SyntheticSpec:
        names = {f.name for f in fields(SyntheticSpec)}
        return SyntheticSpec(**{k: v for k, v in asdict(self).items() if k in names})


@dataclass
class ModelConfig:
    hidden: tuple[int, ...] = (64, 32)
    temperature: float = 0.05
    activation: str = "relu"
    init_checkpoint: str | None = None


@dataclass
class AugmentConfig:
    """Per-op ranges; ``none`` keeps the family default (vector or image table)."""

    ops: tuple[str, ...] = OPS
    range_noise: float | None = None
    range_scale: float | None = None
    range_rotate: float | None = None
    range_shift: float | None = None
    range_cutout: float | None = None
    range_contrast: float | None = None
    range_jitter: float | None = None

    def ranges(self) -> dict[str, float]:
        return {op: v for op in OPS if (v := getattr(self, f"range_{op}")) is not None}


# the training seed follows run.seed, so it is not a separate key
TRAIN_EXCLUDED = ("seed",)


@dataclass
class RunConfig:
    run: RunSection = field(default_factory=RunSection)
    data: DataConfig = field(default_factory=DataConfig)
    model: ModelConfig = field(default_factory=ModelConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    grid: dict[str, list] = field(default_factory=dict)

    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.run.seed)

    def validate(self):
        r, d, m, a = self.run, self.data, self.model, self.augment
        if r.command not in COMMANDS:
            raise ConfigError("run.command", f"must be one of {COMMANDS}")
        if r.command == "analyze" and not r.input_dir:
            raise ConfigError("run.input_dir", "analyze needs an input directory")
        if d.kind not in DATA_KINDS:
            raise ConfigError("data.kind", f"must be one of {DATA_KINDS}")
        if d.kind == "saved" and not d.data_dir:
            raise ConfigError("data.data_dir", "saved data needs a directory")
        if d.kind == "idx":
            for key in IDX_KEYS:
                if getattr(d, key) is None:
                    raise ConfigError(f"data.{key}", "idx data needs every image and label path")
        if d.generator not in ("blobs", "moons"):
            raise ConfigError("data.generator", "must be blobs or moons")
        if d.n_classes < 2:
            raise ConfigError("data.n_classes", "must be >= 2")
        if d.target_if is not None and d.target_if < 1:
            raise ConfigError("data.target_if", "must be >= 1")
        if m.temperature <= 0:
            raise ConfigError("model.temperature", "must be > 0")
        if m.activation not in ("relu", "tanh"):
            raise ConfigError("model.activation", "must be relu or tanh")
        if any(h < 1 for h in m.hidden):
            raise ConfigError("model.hidden", "layer widths must be >= 1")
        bad = [op for op in a.ops if op not in OPS]
        if bad or not a.ops:
            raise ConfigError("augment.ops", f"must be a non-empty subset of {OPS}")
        for op, v in a.ranges().items():
            if v < 0:
                raise ConfigError(f"augment.range_{op}", "must be >= 0")
        try:
            self.train.validate()
        except ConfigError as err:
            raise ConfigError(f"train.{err.key}", str(err).split(": ", 1)[1]) from None
        if r.command == "grid" and not self.grid:
            raise ConfigError("grid", "grid command needs at least one axis")
        for key, values in self.grid.items():
            if not values:
                raise ConfigError(f"grid.{key}", "axis has no values")
        return self


def _section_fields(name: str):
    cls = {"run": RunSection, "data": DataConfig, "model": ModelConfig,
           "train": TrainConfig, "augment": AugmentConfig}[name]
    hints = typing.get_type_hints(cls)
    out = {}
    for f in fields(cls):
        if name == "train" and f.name in TRAIN_EXCLUDED:
            continue
        out[f.name] = hints[f.name]
    return out


KEYS: dict[str, object] = {f"{s}.{k}": t for s in SECTIONS for k, t in _section_fields(s).items()}
LEAVES: dict[str, str] = {}
for _path in KEYS:
    _leaf = _path.split(".", 1)[1]
    assert _leaf not in LEAVES, f"duplicate leaf key {_leaf}"
    LEAVES[_leaf] = _path


def resolve_key(key: str) -> str:
    """Full ``section.key`` path for a dotted or leaf key."""
    key = key.strip().replace("-", "_")
    if key in KEYS:
        return key
    if key in LEAVES:
        return LEAVES[key]
    raise ConfigError(key, "unknown key")


def _is_optional(tp) -> bool:
    return typing.get_origin(tp) in (typing.Union, types.UnionType)


def _is_seq(tp) -> bool:
    if _is_optional(tp):
        tp = [a for a in typing.get_args(tp) if a is not type(None)][0]
    return typing.get_origin(tp) is tuple


def _parse_scalar(text: str, tp, key: str):
    if tp is bool:
        low = text.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {text!r}")
    try:
        return tp(text)
    except ValueError:
        raise ConfigError(key, f"expected {tp.__name__}, got {text!r}") from None


def parse_value(text: str, tp, key: str):
    text = text.strip()
    origin = typing.get_origin(tp)
    args = typing.get_args(tp)
    if _is_optional(tp):
        if text.lower() in ("none", ""):
            return None
        inner = [a for a in args if a is not type(None)][0]
        return parse_value(text, inner, key)
    if origin is tuple:
        if text.lower() in ("", "none"):
            return ()
        return tuple(_parse_scalar(p.strip(), args[0], key) for p in text.split(","))
    return _parse_scalar(text, tp, key)


def format_value(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, tuple):
        return ", ".join(format_value(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def parse_grid_values(text: str, key: str) -> list:
    tp = KEYS[key]
    parts = text.split(";") if _is_seq(tp) else text.split(",")
    return [parse_value(p, tp, f"grid.{key}") for p in parts if p.strip()]


def parse_text(text: str) -> tuple[dict[str, str], dict[str, str]]:
    """Raw ``{key_path: text}`` settings and grid axes from config text."""
    values, grid = {}, {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            if section not in (*SECTIONS, "grid"):
                raise ConfigError(section, f"unknown section (line {lineno})")
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, val = (s.strip() for s in line.split("=", 1))
        if section == "grid" or key.startswith("grid."):
            key = key[5:] if key.startswith("grid.") else key
            grid[resolve_key(key)] = val
            continue
        path = f"{section}.{key}" if section and "." not in key else key
        if path not in KEYS:
            raise ConfigError(path, "unknown key")
        values[path] = val
    return values, grid


def build_config(values: dict[str, str], grid: dict[str, str] | None = None) -> RunConfig:
    cfg = RunConfig()
    for path, text in values.items():
        section, key = path.split(".", 1)
        obj = getattr(cfg, section)
        setattr(obj, key, parse_value(text, KEYS[path], path))
    for path, text in (grid or {}).items():
        cfg.grid[path] = parse_grid_values(text, path)
    return cfg.validate()


def load_config(path=None, overrides: dict[str, str] | None = None,
                grid_overrides: dict[str, str] | None = None) -> RunConfig:
    """Defaults, then the file at ``path``, then ``overrides`` (leaf or dotted keys)."""
    values, grid = {}, {}
    if path is not None:
        with open(path) as fh:
            values, grid = parse_text(fh.read())
    for k, v in (overrides or {}).items():
        values[resolve_key(k)] = v
    for k, v in (grid_overrides or {}).items():
        grid[resolve_key(k)] = v
    return build_config(values, grid)


def dump_config(cfg: RunConfig) -> str:
    """Resolved config with every default filled in; parses back to ``cfg``."""
    lines = []
    for s in SECTIONS:
        lines.append(f"[{s}]")
        obj = getattr(cfg, s)
        for k in _section_fields(s):
            lines.append(f"{k} = {format_value(getattr(obj, k))}")
        lines.append("")
    if cfg.grid:
        lines.append("[grid]")
        for path, vals in cfg.grid.items():
            sep = "; " if _is_seq(KEYS[path]) else ", "
            lines.append(f"{path} = {sep.join(format_value(v) for v in vals)}")
        lines.append("")
    return "\n".join(lines)


def apply_cell(cfg: RunConfig, cell: dict[str, object]) -> RunConfig:
    """Copy of ``cfg`` with the grid cell's values set and the grid cleared."""
    sections = {s: replace(getattr(cfg, s)) for s in SECTIONS}
    for path, value in cell.items():
        s, k = path.split(".", 1)
        setattr(sections[s], k, value)
    out = RunConfig(**sections, grid={})
    out.run.command = "adapt"
    return out.validate()
